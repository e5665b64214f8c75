import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from manta.errors import (
    CorruptSnapshot,
    DimensionMismatch,
    DuplicateId,
    EmptyCollection,
    NonFiniteInput,
    VersionMismatch,
)
from manta.gateway import EmbeddingVector
from manta.index import (
    Collection,
    DocumentRecord,
    cosine,
    dequantize,
    load_snapshot,
    quantize,
    save_snapshot,
    search,
    snapshot_bytes,
    triplet_context,
)

from conftest import make_vector_collection, random_unit_rows


# --- independent oracle -------------------------------------------------------

def oracle_cosine(a, b):
    dot = sum(x * y for x, y in zip(a, b))
    na = math.sqrt(sum(x * x for x in a))
    nb = math.sqrt(sum(x * x for x in b))
    if na == 0 or nb == 0:
        return 0.0
    return dot / (na * nb)


def oracle_rank(doc_vectors, ids, positives, negative):
    """Full-precision brute force: score every document, sort by the same key."""
    scored = []
    for rid, doc in zip(ids, doc_vectors):
        neg = oracle_cosine(doc, negative)
        margins = [oracle_cosine(doc, p) - neg for p in positives]
        context = sum(min(m, 0.0) for m in margins)
        scored.append((rid, context, sum(margins)))
    scored.sort(key=lambda t: (-t[1], -t[2], t[0]))
    return scored


# --- quantization -------------------------------------------------------------

class TestQuantize:
    def test_zero_vector(self):
        q = quantize(EmbeddingVector.of([0.0, 0.0, 0.0]))
        assert q.codes == (0, 0, 0)
        assert q.scale == 1.0

    def test_hand_computed(self):
        q = quantize(EmbeddingVector.of([1.0, -1.0, 0.5]))
        assert q.scale == pytest.approx(1 / 127)
        assert q.codes == (127, -127, 64)  # 63.5 rounds away from zero

    @given(st.lists(st.floats(min_value=-1e6, max_value=1e6,
                              allow_nan=False, allow_infinity=False),
                    min_size=1, max_size=48))
    def test_reconstruction_bound(self, values):
        q = quantize(EmbeddingVector.of(values))
        back = dequantize(q)
        for orig, rec in zip(values, back.values):
            assert abs(orig - rec) <= q.scale / 2 + 1e-12


# EmbeddingVector validates finiteness itself, so sneak the NaN in afterwards
def test_nan_input_rejected():
    vec = EmbeddingVector.of([1.0, 2.0])
    object.__setattr__(vec, "values", (float("nan"), 2.0))
    with pytest.raises(NonFiniteInput):
        quantize(vec)


# --- cosine / triplet ----------------------------------------------------------

class TestCosine:
    def test_self_similarity(self):
        v = EmbeddingVector.of([1.0, 2.0, -3.0])
        assert cosine(v, v) == pytest.approx(1.0)

    def test_negation(self):
        v = EmbeddingVector.of([1.0, 2.0])
        neg = EmbeddingVector.of([-1.0, -2.0])
        assert cosine(v, neg) == pytest.approx(-1.0)

    def test_orthogonal(self):
        assert cosine([1.0, 0.0], [0.0, 1.0]) == pytest.approx(0.0)

    def test_zero_vector_convention(self):
        assert cosine([0.0, 0.0], [1.0, 1.0]) == 0.0

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            cosine([1.0], [1.0, 2.0])


class TestTripletContext:
    def test_positives_equal_negative(self):
        doc = [1.0, 0.0]
        q = [0.5, 0.5]
        context, margin = triplet_context(doc, [q, q], q)
        assert context == pytest.approx(0.0)
        assert margin == pytest.approx(0.0)

    def test_single_positive_margin(self):
        # doc along x; positive at 25.84°, negative at 66.42° -> cosines .9, .4
        doc = [1.0, 0.0]
        pos = [0.9, math.sqrt(1 - 0.81)]
        neg = [0.4, math.sqrt(1 - 0.16)]
        context, margin = triplet_context(doc, [pos], neg)
        assert context == pytest.approx(0.0, abs=1e-12)
        assert margin == pytest.approx(0.5, abs=1e-12)

    def test_mixed_margins(self):
        doc = [1.0, 0.0]
        neg = [0.5, math.sqrt(0.75)]
        pos_hi = [0.7, math.sqrt(1 - 0.49)]
        pos_lo = [0.1, math.sqrt(1 - 0.01)]
        context, margin = triplet_context(doc, [pos_hi, pos_lo], neg)
        assert context == pytest.approx(min(0.7 - 0.5, 0) + min(0.1 - 0.5, 0))
        assert margin == pytest.approx((0.7 - 0.5) + (0.1 - 0.5))

    @settings(max_examples=50)
    @given(st.integers(min_value=0, max_value=2**32 - 1),
           st.integers(min_value=1, max_value=4))
    def test_context_never_positive(self, seed, n_pos):
        rng = np.random.default_rng(seed)
        doc = rng.standard_normal(8)
        positives = [rng.standard_normal(8) for _ in range(n_pos)]
        negative = rng.standard_normal(8)
        context, _ = triplet_context(doc, positives, negative)
        assert context <= 1e-12


# --- search --------------------------------------------------------------------

class TestSearch:
    def test_single_doc_perfect_match(self):
        doc = [1.0, 0.0, 0.0, 0.0]
        col = make_vector_collection("adapter", [doc])
        hits = search(col, [doc], [0.0, 1.0, 0.0, 0.0], k=1)
        assert len(hits) == 1
        assert hits[0].context == pytest.approx(0.0, abs=1e-6)

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(42)
        docs = random_unit_rows(rng, 10, 16)
        col = make_vector_collection("adapter", docs.tolist())
        positives = random_unit_rows(rng, 2, 16).tolist()
        negative = random_unit_rows(rng, 1, 16)[0].tolist()
        hits = search(col, positives, negative, k=3)
        expected = oracle_rank(docs.tolist(),
                               [r.id for r, _ in col.records],
                               positives, negative)
        for hit, (rid, ctx, ms) in zip(hits, expected[:3]):
            assert hit.record.id == rid
            assert hit.context == pytest.approx(ctx, abs=0.02)
            assert hit.margin_sum == pytest.approx(ms, abs=0.02)

    def test_tie_broken_by_id(self):
        doc = [1.0, 0.0]
        col = make_vector_collection("adapter", [doc, doc], ids=["b", "a"])
        hits = search(col, [doc], [0.0, 1.0], k=2)
        assert [h.record.id for h in hits] == ["a", "b"]

    def test_empty_collection(self):
        col = Collection(name="e", kind="adapter", dimension=4, records=[])
        with pytest.raises(EmptyCollection):
            search(col, [[1.0, 0, 0, 0]], [0, 1.0, 0, 0], k=1)

    def test_scale_invariance(self):
        rng = np.random.default_rng(3)
        docs = random_unit_rows(rng, 6, 8)
        positives = random_unit_rows(rng, 2, 8)
        negative = random_unit_rows(rng, 1, 8)[0]
        col = make_vector_collection("adapter", docs.tolist())
        base = [h.record.id for h in search(col, positives.tolist(),
                                            negative.tolist(), k=6)]
        scaled = [h.record.id for h in search(col, (7.5 * positives).tolist(),
                                              (7.5 * negative).tolist(), k=6)]
        assert base == scaled

    def test_threshold_filter_passes_clean_hits(self):
        rng = np.random.default_rng(11)
        doc = random_unit_rows(rng, 1, 8)[0]
        far = -doc
        col = make_vector_collection("adapter", [doc.tolist(), far.tolist()],
                                     ids=["near", "far"])
        neg = random_unit_rows(rng, 1, 8)[0] * 0.1
        hits = search(col, [doc.tolist()], neg.tolist(), k=2, threshold=0.5)
        assert hits[0].record.id == "near"


# --- collection invariants -----------------------------------------------------

def test_duplicate_ids_rejected():
    with pytest.raises(DuplicateId):
        make_vector_collection("adapter", [[1.0, 0.0], [0.0, 1.0]],
                               ids=["x", "x"])


def test_kind_mismatch_rejected():
    rec = DocumentRecord(id="a", kind="adapter", exemplar_prompt="p")
    q = quantize(EmbeddingVector.of([1.0, 0.0]))
    with pytest.raises(ValueError):
        Collection(name="c", kind="checkpoint", dimension=2, records=[(rec, q)])


# --- snapshots -----------------------------------------------------------------

class TestSnapshot:
    def _sample(self):
        rng = np.random.default_rng(5)
        docs = random_unit_rows(rng, 7, 12)
        return make_vector_collection("checkpoint", docs.tolist(), name="snap")

    def test_round_trip_equal(self, tmp_path):
        col = self._sample()
        path = tmp_path / "col.mnta"
        save_snapshot(col, path)
        loaded = load_snapshot(path)
        assert loaded == col

    def test_byte_exact_round_trip(self, tmp_path):
        col = self._sample()
        path = tmp_path / "col.mnta"
        save_snapshot(col, path)
        assert snapshot_bytes(load_snapshot(path)) == path.read_bytes()

    def test_truncated_file(self, tmp_path):
        col = self._sample()
        path = tmp_path / "col.mnta"
        save_snapshot(col, path)
        data = path.read_bytes()
        path.write_bytes(data[:-5])
        with pytest.raises(CorruptSnapshot):
            load_snapshot(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.mnta"
        path.write_bytes(b"NOPE" + b"\x00" * 40)
        with pytest.raises(CorruptSnapshot):
            load_snapshot(path)

    def test_future_version(self, tmp_path):
        col = self._sample()
        path = tmp_path / "col.mnta"
        save_snapshot(col, path)
        data = bytearray(path.read_bytes())
        data[4:6] = (99).to_bytes(2, "little")
        path.write_bytes(bytes(data))
        with pytest.raises(VersionMismatch):
            load_snapshot(path)

    def test_vector_section_size(self, tmp_path):
        # vector payload is exactly count * (dim + 8) bytes after the metadata
        col = self._sample()
        raw = snapshot_bytes(col)
        import struct

        _, _, _, dim, count, meta_len = struct.unpack_from("<4sHBIQQ", raw)
        header = struct.calcsize("<4sHBIQQ")
        assert len(raw) == header + meta_len + count * (dim + 8)
        assert count * (dim + 8) <= count * (dim + 16)
