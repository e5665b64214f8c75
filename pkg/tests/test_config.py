import json

import pytest

from manta.config import EngineConfig, load_config


TOML_BODY = """
budget = 9000
details_n = 5
store_dir = "out/runs"

[completion]
endpoint = "mock://toml"

[policy]
omega_c = 0.4
k_adapters = 2

[backend]
mode = "stub"
"""


class TestLoadConfig:
    def test_toml(self, tmp_path):
        path = tmp_path / "engine.toml"
        path.write_text(TOML_BODY)
        cfg = load_config(path)
        assert cfg.budget == 9000
        assert cfg.details_n == 5
        assert cfg.completion.endpoint == "mock://toml"
        assert cfg.policy.omega_c == 0.4
        assert cfg.policy.k_adapters == 2
        # unspecified fields keep their defaults
        assert cfg.policy.decay == EngineConfig().policy.decay
        assert cfg.embedding.endpoint == "mock://default"

    def test_json(self, tmp_path):
        path = tmp_path / "engine.json"
        path.write_text(json.dumps({
            "embedding": {"endpoint": "mock://json", "model_id": "emb-1"},
            "queue_capacity": 2,
        }))
        cfg = load_config(path)
        assert cfg.embedding.endpoint == "mock://json"
        assert cfg.embedding.model_id == "emb-1"
        assert cfg.queue_capacity == 2

    def test_guardrails_file(self, tmp_path):
        rails = tmp_path / "rails.txt"
        rails.write_text("# blocked things\nid:adap-003\nwatermark\n")
        path = tmp_path / "engine.json"
        path.write_text(json.dumps({"guardrails_file": str(rails)}))
        cfg = load_config(path)
        assert cfg.guardrails.id_blacklist == frozenset({"adap-003"})
        assert cfg.guardrails.word_filters == frozenset({"watermark"})

    def test_invalid_policy_rejected(self, tmp_path):
        path = tmp_path / "engine.json"
        path.write_text(json.dumps({"policy": {"decay": 1.5}}))
        with pytest.raises(ValueError):
            load_config(path)


class TestFingerprint:
    def test_stable_and_json_safe(self):
        a, b = EngineConfig(), EngineConfig()
        assert json.dumps(a.fingerprint_dict(), sort_keys=True) == \
            json.dumps(b.fingerprint_dict(), sort_keys=True)

    def test_policy_change_alters_fingerprint(self):
        from dataclasses import replace

        from manta.gating import RetrievalPolicy

        base = EngineConfig()
        other = replace(base, policy=RetrievalPolicy(omega_c=0.5))
        assert base.fingerprint_dict() != other.fingerprint_dict()

    def test_store_dir_not_in_fingerprint(self):
        from dataclasses import replace

        base = EngineConfig()
        moved = replace(base, store_dir="elsewhere")
        assert base.fingerprint_dict() == moved.fingerprint_dict()
