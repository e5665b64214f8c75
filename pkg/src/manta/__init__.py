"""manta: maps a free-text image prompt to a generation workflow — one
checkpoint, a set of weighted adapters, and an enhanced prompt — via
structured concept decomposition, LLM detail enrichment, and triplet-scored
retrieval over INT8-quantized prompt-exemplar embeddings, under an explicit
token budget.
"""

__version__ = "0.1.0"

from .concepts import Concept, ConceptMap, assemble_prompt, flatten_to_query, parse_concept_map
from .gateway import EmbeddingVector, ProviderConfig, TokenLedger, count_tokens
from .index import Collection, DocumentRecord, quantize, search, triplet_context
from .pipeline import Engine, RunRecord
from .workflow import GenerationKnobs, GenerationWorkflow

__all__ = [
    "Concept", "ConceptMap", "assemble_prompt", "flatten_to_query",
    "parse_concept_map", "EmbeddingVector", "ProviderConfig", "TokenLedger",
    "count_tokens", "Collection", "DocumentRecord", "quantize", "search",
    "triplet_context", "Engine", "RunRecord", "GenerationKnobs",
    "GenerationWorkflow", "__version__",
]
