import numpy as np
import pytest

from manta.backend import BackendConfig, GenerationBackend
from manta.config import EngineConfig
from manta.gateway import EmbeddingVector, ProviderConfig, TokenLedger, mock_embed_one
from manta.index import Collection, DocumentRecord, quantize
from manta.ingest import bundled_fixture_path, load_dataset
from manta.pipeline import Engine, RunStore


MOCK_ENDPOINT = "mock://test"


@pytest.fixture
def mock_cfg():
    return ProviderConfig(endpoint=MOCK_ENDPOINT)


@pytest.fixture
def ledger():
    return TokenLedger()


def make_collection(kind, entries, name="col", seed="test"):
    """Collection from (id, exemplar_prompt) pairs, mock-embedded and quantized."""
    records = []
    for rid, prompt in entries:
        rec = DocumentRecord(id=rid, kind=kind, exemplar_prompt=prompt,
                             display_name=rid)
        records.append((rec, quantize(mock_embed_one(seed, prompt))))
    dim = records[0][1].dimension if records else 64
    return Collection(name=name, kind=kind, dimension=dim, records=records)


def make_vector_collection(kind, vectors, name="col", ids=None):
    """Collection from explicit embedding vectors (prompt text is synthetic)."""
    records = []
    for i, vec in enumerate(vectors):
        rid = ids[i] if ids else f"doc-{i:04d}"
        rec = DocumentRecord(id=rid, kind=kind, exemplar_prompt=f"prompt {rid}",
                             display_name=rid)
        records.append((rec, quantize(EmbeddingVector.of(vec))))
    return Collection(name=name, kind=kind, dimension=len(vectors[0]),
                      records=records)


@pytest.fixture(scope="session")
def fixture_records():
    return load_dataset(bundled_fixture_path()).records


@pytest.fixture
def engine(tmp_path, fixture_records):
    from manta.ingest import build_collection

    cfg = EngineConfig(store_dir=str(tmp_path / "runs"))
    ledger = TokenLedger()
    checkpoints = build_collection(
        [r for r in fixture_records if r.kind == "checkpoint"],
        cfg.embedding, ledger, name="checkpoints")
    adapters = build_collection(
        [r for r in fixture_records if r.kind == "adapter"],
        cfg.embedding, ledger, name="adapters")
    return Engine(cfg, checkpoints, adapters,
                  backend=GenerationBackend(BackendConfig(mode="stub")),
                  store=RunStore(tmp_path / "runs"))


def random_unit_rows(rng, n, dim):
    mat = rng.standard_normal((n, dim))
    return mat / np.linalg.norm(mat, axis=1, keepdims=True)
