"""Embedded vector store: INT8 scalar quantization, cosine similarity,
triplet context scoring, brute-force search, and a binary snapshot format.

Collections are immutable after build/load; searches are lock-free scans
over a dequantized code matrix. Scale is desk-sized (thousands of records),
so no ANN structure is used.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    CorruptSnapshot,
    DimensionMismatch,
    DuplicateId,
    EmptyCollection,
    NonFiniteInput,
    VersionMismatch,
)
from .gateway import EmbeddingVector

SNAPSHOT_MAGIC = b"MNTA"
SNAPSHOT_VERSION = 1

KINDS = ("checkpoint", "adapter")


@dataclass(frozen=True)
class DocumentRecord:
    """A checkpoint or adapter document, searchable by its exemplar prompt."""

    id: str
    kind: str
    exemplar_prompt: str
    display_name: str = ""
    base_model: str = ""
    flags: frozenset[str] = frozenset()
    description: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if not self.exemplar_prompt:
            raise ValueError(f"record {self.id!r} has an empty exemplar prompt")
        object.__setattr__(self, "flags", frozenset(self.flags))

    def metadata_dict(self) -> dict:
        # compact on disk: omit empty fields
        meta = {"p": self.exemplar_prompt}
        if self.display_name:
            meta["n"] = self.display_name
        if self.base_model:
            meta["m"] = self.base_model
        if self.flags:
            meta["f"] = sorted(self.flags)
        if self.description:
            meta["d"] = self.description
        return meta

    @classmethod
    def from_metadata(cls, rid: str, kind: str, meta: dict) -> "DocumentRecord":
        return cls(
            id=rid,
            kind=kind,
            exemplar_prompt=meta.get("p", ""),
            display_name=meta.get("n", ""),
            base_model=meta.get("m", ""),
            flags=frozenset(meta.get("f", [])),
            description=meta.get("d", ""),
        )


@dataclass(frozen=True)
class QuantizedVector:
    codes: tuple[int, ...]
    scale: float
    dimension: int

    def __post_init__(self):
        if len(self.codes) != self.dimension:
            raise DimensionMismatch("codes length != dimension")
        if self.scale <= 0:
            raise ValueError("scale must be positive")


def quantize(v: EmbeddingVector) -> QuantizedVector:
    """Symmetric per-vector INT8 quantization.

    scale = max|v| / 127 (1.0 for the all-zero vector); codes round
    half-away-from-zero and clamp to [-127, 127]. Reconstruction error is
    at most scale/2 per component.
    """
    arr = np.asarray(v.values, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteInput("cannot quantize a vector with NaN/inf components")
    max_abs = float(np.max(np.abs(arr))) if arr.size else 0.0
    scale = max_abs / 127.0 if max_abs > 0 else 1.0
    scaled = arr / scale
    codes = np.clip(np.copysign(np.floor(np.abs(scaled) + 0.5), scaled), -127, 127)
    return QuantizedVector(
        codes=tuple(int(c) for c in codes), scale=scale, dimension=arr.size
    )


def dequantize(q: QuantizedVector) -> EmbeddingVector:
    return EmbeddingVector.of(np.asarray(q.codes, dtype=np.float64) * q.scale)


def _as_array(v) -> np.ndarray:
    if isinstance(v, EmbeddingVector):
        return np.asarray(v.values, dtype=np.float64)
    return np.asarray(v, dtype=np.float64)


def cosine(a, b) -> float:
    """Standard cosine similarity; zero vector against anything is 0."""
    va, vb = _as_array(a), _as_array(b)
    if va.shape != vb.shape:
        raise DimensionMismatch(f"cosine over dims {va.shape} vs {vb.shape}")
    na, nb = np.linalg.norm(va), np.linalg.norm(vb)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.clip(va @ vb / (na * nb), -1.0, 1.0))


def triplet_context(doc_vec, positives, negative) -> tuple[float, float]:
    """Hinge-penalty context score over positive/negative queries.

    For each positive i, m_i = cos(doc, pos_i) - cos(doc, neg).
    Returns (sum of min(m_i, 0), sum of m_i). The first term is never
    positive; the second breaks ties among fully-relevant documents.
    """
    if not positives:
        raise ValueError("at least one positive query is required")
    neg_sim = cosine(doc_vec, negative)
    margins = [cosine(doc_vec, p) - neg_sim for p in positives]
    context = float(sum(min(m, 0.0) for m in margins))
    return context, float(sum(margins))


@dataclass(frozen=True)
class ScoredHit:
    record: DocumentRecord
    context: float
    margin_sum: float
    positive_similarity: float


class Collection:
    """Immutable set of (record, quantized vector) pairs of one kind."""

    def __init__(self, name: str, kind: str, dimension: int,
                 records: list[tuple[DocumentRecord, QuantizedVector]]):
        if kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        seen: set[str] = set()
        for rec, vec in records:
            if rec.id in seen:
                raise DuplicateId(f"duplicate record id {rec.id!r}")
            seen.add(rec.id)
            if vec.dimension != dimension:
                raise DimensionMismatch(
                    f"record {rec.id!r} has dim {vec.dimension}, collection {dimension}"
                )
            if rec.kind != kind:
                raise ValueError(f"record {rec.id!r} kind {rec.kind!r} != {kind!r}")
        self.name = name
        self.kind = kind
        self.dimension = dimension
        self.records = tuple(records)
        # dequantized matrix for vectorized scoring
        if records:
            codes = np.array([q.codes for _, q in records], dtype=np.float64)
            scales = np.array([q.scale for _, q in records], dtype=np.float64)
            self._matrix = codes * scales[:, None]
            norms = np.linalg.norm(self._matrix, axis=1)
            norms[norms == 0] = 1.0
            self._unit = self._matrix / norms[:, None]
        else:
            self._matrix = np.zeros((0, dimension))
            self._unit = self._matrix

    def __len__(self) -> int:
        return len(self.records)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Collection)
            and self.name == other.name
            and self.kind == other.kind
            and self.dimension == other.dimension
            and self.records == other.records
        )

    def stats(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "dimension": self.dimension,
            "records": len(self.records),
        }


def _unit(v) -> np.ndarray:
    arr = _as_array(v)
    n = np.linalg.norm(arr)
    return arr / n if n > 0 else arr


def score_collection(c: Collection, positives, negative) -> list[ScoredHit]:
    """Score every record; sorted by (context desc, margin_sum desc, id asc)."""
    if len(c) == 0:
        raise EmptyCollection(f"collection {c.name!r} is empty")
    if not positives:
        raise ValueError("at least one positive query is required")
    pos = np.stack([_unit(p) for p in positives])  # (P, d)
    if pos.shape[1] != c.dimension:
        raise DimensionMismatch(
            f"query dim {pos.shape[1]} != collection dim {c.dimension}"
        )
    neg = _unit(negative)
    pos_sims = c._unit @ pos.T                     # (N, P)
    neg_sims = c._unit @ neg                       # (N,)
    margins = pos_sims - neg_sims[:, None]
    contexts = np.minimum(margins, 0.0).sum(axis=1)
    margin_sums = margins.sum(axis=1)
    best_pos = pos_sims.max(axis=1)
    hits = [
        ScoredHit(record=rec, context=float(contexts[i]),
                  margin_sum=float(margin_sums[i]),
                  positive_similarity=float(best_pos[i]))
        for i, (rec, _) in enumerate(c.records)
    ]
    hits.sort(key=lambda h: (-h.context, -h.margin_sum, h.record.id))
    return hits


CONTEXT_ZERO_EPS = 1e-9


def search(c: Collection, positives, negative, k: int,
           threshold: float | None = None) -> list[ScoredHit]:
    """Top-k ranked hits over dequantized vectors.

    With a threshold, a hit passes when its context is zero (no hinge
    penalty) and its margin_sum clears the threshold; if nothing passes,
    the plain ranked prefix is returned so the caller can apply its own
    gating/fallback policy.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    hits = score_collection(c, positives, negative)
    if threshold is not None:
        passing = [
            h for h in hits
            if h.context >= -CONTEXT_ZERO_EPS and h.margin_sum >= threshold
        ]
        if passing:
            return passing[:k]
    return hits[:k]


# --- snapshot format ---------------------------------------------------------
#
# Layout (little-endian):
#   magic "MNTA" | version u16 | kind u8 | dimension u32 | count u64
#   | meta_len u64 | meta JSON (ids + metadata, in record order)
#   | per record: scale f64, codes int8[dimension]
#
# Metadata (ids, names, prompts) lives in one header-adjacent block; the
# vector section costs exactly count * (dimension + 8) bytes.

_HEADER = struct.Struct("<4sHBIQQ")


def snapshot_bytes(c: Collection) -> bytes:
    meta = json.dumps(
        {"n": c.name,
         "r": [{"i": rec.id, **rec.metadata_dict()} for rec, _ in c.records]},
        sort_keys=True, separators=(",", ":"),
    ).encode("utf-8")
    buf = io.BytesIO()
    buf.write(_HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION,
                           KINDS.index(c.kind), c.dimension, len(c.records),
                           len(meta)))
    buf.write(meta)
    for _, q in c.records:
        buf.write(struct.pack("<d", q.scale))
        buf.write(np.asarray(q.codes, dtype=np.int8).tobytes())
    return buf.getvalue()


def save_snapshot(c: Collection, path) -> None:
    with open(path, "wb") as fh:
        fh.write(snapshot_bytes(c))


def load_snapshot(path, name: str | None = None) -> Collection:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size:
        raise CorruptSnapshot("file shorter than header")
    magic, version, kind_code, dim, count, meta_len = _HEADER.unpack_from(data)
    if magic != SNAPSHOT_MAGIC:
        raise CorruptSnapshot(f"bad magic {magic!r}")
    if version != SNAPSHOT_VERSION:
        raise VersionMismatch(
            f"snapshot version {version}, supported {SNAPSHOT_VERSION}"
        )
    if kind_code >= len(KINDS):
        raise CorruptSnapshot(f"unknown kind byte {kind_code}")
    kind = KINDS[kind_code]
    offset = _HEADER.size
    if len(data) < offset + meta_len:
        raise CorruptSnapshot("truncated metadata block")
    try:
        wrapper = json.loads(data[offset:offset + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptSnapshot(f"metadata block unreadable: {exc}")
    if not isinstance(wrapper, dict):
        raise CorruptSnapshot("metadata block is not a mapping")
    meta = wrapper.get("r")
    if not isinstance(meta, list) or len(meta) != count:
        raise CorruptSnapshot("metadata entry count mismatch")
    offset += meta_len
    record_size = 8 + dim
    if len(data) != offset + count * record_size:
        raise CorruptSnapshot("vector section size mismatch")
    records: list[tuple[DocumentRecord, QuantizedVector]] = []
    for entry in meta:
        (scale,) = struct.unpack_from("<d", data, offset)
        offset += 8
        codes = np.frombuffer(data, dtype=np.int8, count=dim, offset=offset)
        offset += dim
        if scale <= 0:
            raise CorruptSnapshot(f"non-positive scale for record {entry.get('i')!r}")
        rec = DocumentRecord.from_metadata(entry.get("i", ""), kind, entry)
        records.append(
            (rec, QuantizedVector(codes=tuple(int(x) for x in codes),
                                  scale=scale, dimension=dim))
        )
    return Collection(name=name or wrapper.get("n", "snapshot"), kind=kind,
                      dimension=dim, records=records)
