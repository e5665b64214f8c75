"""LLM detail enhancement: expand a concept with n specific descriptive fragments.

The prompt template lives in ``data/detail_prompt.txt`` so operators can edit
it without rebuilds; placeholders are ``{n}`` and ``{concept}``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources

from .concepts import Concept, flatten_to_query, merge_details
from .errors import EmptyEnhancement
from .gateway import ProviderConfig, TokenLedger, complete

MAX_FRAGMENT_CHARS = 80  # guards against LLM paragraphs leaking into prompts


@dataclass(frozen=True)
class EnhancementRequest:
    concept: Concept
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("detail count n must be >= 1")


def _load_template() -> str:
    return resources.files("manta.data").joinpath("detail_prompt.txt").read_text()


def render_detail_prompt(req: EnhancementRequest) -> str:
    """Substitute {n} and {concept} into the template, verbatim otherwise."""
    template = _load_template()
    return template.replace("{n}", str(req.n)).replace(
        "{concept}", flatten_to_query(req.concept)
    )


_BULLET = re.compile(r"^\s*(?:[-*•]+|\d+[.)])\s*")
_QUOTES = "'\"`"


def parse_fragments(text: str) -> list[str]:
    """Split an LLM reply into clean detail fragments.

    Tolerant of bullets, numbering, and stray quotes; fragments longer than
    MAX_FRAGMENT_CHARS are dropped.
    """
    out: list[str] = []
    for line in text.splitlines():
        for piece in line.split(","):
            piece = _BULLET.sub("", piece).strip().strip(_QUOTES).strip()
            if piece and len(piece) <= MAX_FRAGMENT_CHARS:
                out.append(piece)
    return out


def enhance_concept(cfg: ProviderConfig, req: EnhancementRequest,
                    ledger: TokenLedger, tokenizer=None, client=None) -> Concept:
    """Merge up to req.n LLM-generated details into the concept.

    Existing details are never removed or reordered; new fragments dedupe
    case-insensitively against them.
    """
    response = complete(cfg, render_detail_prompt(req), ledger,
                        tokenizer=tokenizer, client=client)
    fragments = parse_fragments(response)
    if not fragments:
        raise EmptyEnhancement(f"no parseable fragments in: {response[:120]!r}")
    return merge_details(req.concept, fragments[: req.n])
