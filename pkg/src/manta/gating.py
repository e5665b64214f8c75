"""Retrieval gating: query construction, checkpoint selection above a
relevancy threshold, and the threshold-decay adapter loop with guardrails.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources

from .concepts import ConceptMap, flatten_to_query
from .errors import NoCheckpointAvailable
from .gateway import EmbeddingVector, ProviderConfig, TokenLedger, embed
from .index import CONTEXT_ZERO_EPS, Collection, DocumentRecord, ScoredHit, score_collection


def default_negative_query() -> str:
    return resources.files("manta.data").joinpath("negative_prompt.txt").read_text().strip()


@dataclass(frozen=True)
class RetrievalPolicy:
    omega_c: float = 0.35
    k_adapters: int = 3
    init_thresh: float = 0.6
    decay: float = 0.95
    max_decay_iters: int = 25
    negative_query: str = field(default_factory=default_negative_query)

    def __post_init__(self):
        if not (0 < self.decay < 1):
            raise ValueError("decay must be in (0, 1)")
        if not (0 < self.init_thresh <= 1):
            raise ValueError("init_thresh must be in (0, 1]")
        if self.k_adapters < 1:
            raise ValueError("k_adapters must be >= 1")
        if self.max_decay_iters < 1:
            raise ValueError("max_decay_iters must be >= 1")


@dataclass(frozen=True)
class Guardrails:
    id_blacklist: frozenset[str] = frozenset()
    word_filters: frozenset[str] = frozenset()

    @classmethod
    def from_file(cls, path) -> "Guardrails":
        """One entry per line; 'id:' prefix marks blacklist ids, anything else
        is a case-insensitive filter word."""
        ids, words = set(), set()
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if line.startswith("id:"):
                    ids.add(line[3:].strip())
                else:
                    words.add(line.lower())
        return cls(id_blacklist=frozenset(ids), word_filters=frozenset(words))

    def blocks(self, record: DocumentRecord) -> bool:
        if record.id in self.id_blacklist:
            return True
        haystack = f"{record.display_name} {record.exemplar_prompt}".lower()
        return any(word in haystack for word in self.word_filters)


@dataclass(frozen=True)
class SelectionResult:
    checkpoint: DocumentRecord
    adapters: tuple[tuple[DocumentRecord, float], ...]
    trace: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "checkpoint": {"id": self.checkpoint.id,
                           "display_name": self.checkpoint.display_name},
            "adapters": [
                {"id": rec.id, "display_name": rec.display_name, "weight": w}
                for rec, w in self.adapters
            ],
            "trace": list(self.trace),
        }


def build_queries(m: ConceptMap, cfg: ProviderConfig, ledger: TokenLedger,
                  policy: RetrievalPolicy, tokenizer=None, client=None,
                  ) -> tuple[list[EmbeddingVector], EmbeddingVector]:
    """Embed the main-then-support concept queries plus the negative query."""
    texts = [flatten_to_query(m.main)]
    texts.extend(flatten_to_query(c) for c in m.support)
    vectors = embed(cfg, texts + [policy.negative_query], ledger,
                    tokenizer=tokenizer, client=client)
    return vectors[:-1], vectors[-1]


def apply_guardrails(hits: list[ScoredHit], rails: Guardrails) -> list[ScoredHit]:
    return [h for h in hits if not rails.blocks(h.record)]


def select_checkpoint(col: Collection, positives, negative,
                      policy: RetrievalPolicy, rails: Guardrails,
                      trace: list[str] | None = None) -> DocumentRecord:
    """Highest-ranked checkpoint with zero hinge penalty and margin >= omega_c;
    falls back to the best surviving hit when nothing clears the threshold."""
    if col.kind != "checkpoint":
        raise ValueError("select_checkpoint requires a checkpoint collection")
    trace = trace if trace is not None else []
    hits = apply_guardrails(score_collection(col, positives, negative), rails)
    if not hits:
        raise NoCheckpointAvailable(
            f"no checkpoint survives guardrails in {col.name!r}"
        )
    for h in hits:
        if h.context >= -CONTEXT_ZERO_EPS and h.margin_sum >= policy.omega_c:
            trace.append(
                f"checkpoint {h.record.id}: threshold met "
                f"(margin_sum={h.margin_sum:.4f} >= omega_c={policy.omega_c})"
            )
            return h.record
    best = hits[0]
    trace.append(
        f"checkpoint {best.record.id}: fallback, no hit cleared omega_c="
        f"{policy.omega_c} (best margin_sum={best.margin_sum:.4f})"
    )
    return best.record


def query_loras(col: Collection, positives, negative,
                policy: RetrievalPolicy, rails: Guardrails,
                trace: list[str] | None = None,
                ) -> list[tuple[DocumentRecord, float]]:
    """Threshold-decay adapter retrieval.

    Retrieve, keep hits with margin_sum >= threshold after guardrails; while
    fewer than k_adapters are collected, multiply the threshold by the decay
    factor, up to max_decay_iters relaxations. An empty result is a valid
    outcome (adapter-gating failure mode).
    """
    if col.kind != "adapter":
        raise ValueError("query_loras requires an adapter collection")
    trace = trace if trace is not None else []
    if len(col) == 0:
        trace.append("adapters: collection empty, gating exhausted with 0 hits")
        return []
    hits = apply_guardrails(score_collection(col, positives, negative), rails)
    threshold = policy.init_thresh
    selected: list[ScoredHit] = []
    decays = 0
    while True:
        selected = [h for h in hits if h.margin_sum >= threshold]
        if len(selected) >= policy.k_adapters or decays >= policy.max_decay_iters:
            break
        decays += 1
        # recomputed from the closed form each time so the loop cannot drift
        threshold = policy.init_thresh * policy.decay ** decays
    selected = selected[: policy.k_adapters]
    if selected:
        weight = 1.0 / len(selected)
        trace.append(
            f"adapters: {len(selected)} selected after {decays} decay "
            f"iterations (final threshold {threshold:.6f})"
        )
        return [(h.record, weight) for h in selected]
    trace.append(
        f"adapters: gating exhausted after {decays} decay iterations, 0 hits "
        f"(final threshold {threshold:.6f})"
    )
    return []
