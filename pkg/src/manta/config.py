"""Engine configuration: providers, retrieval policy, guardrails, backend,
token budget, and run-store location. Loadable from TOML or JSON.
"""

from __future__ import annotations

import json

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field, replace
from pathlib import Path

from .backend import BackendConfig
from .gating import Guardrails, RetrievalPolicy
from .gateway import ProviderConfig

DEFAULT_DETAILS_N = 8  # detail fragments requested per concept


@dataclass(frozen=True)
class EngineConfig:
    completion: ProviderConfig = field(
        default_factory=lambda: ProviderConfig(endpoint="mock://default"))
    embedding: ProviderConfig = field(
        default_factory=lambda: ProviderConfig(endpoint="mock://default"))
    judge: ProviderConfig = field(
        default_factory=lambda: ProviderConfig(endpoint="mock://default"))
    policy: RetrievalPolicy = field(default_factory=RetrievalPolicy)
    guardrails: Guardrails = field(default_factory=Guardrails)
    backend: BackendConfig = field(default_factory=BackendConfig)
    budget: int | None = None
    details_n: int = DEFAULT_DETAILS_N
    enhance_support: bool = True
    img2img_denoise: float = 0.5
    store_dir: str = "runs"
    checkpoint_snapshot: str | None = None
    adapter_snapshot: str | None = None
    queue_capacity: int = 4

    def fingerprint_dict(self) -> dict:
        """Stable digest input: everything that affects a run's outputs."""
        return {
            "completion": self.completion.endpoint + "|" + self.completion.model_id,
            "embedding": self.embedding.endpoint + "|" + self.embedding.model_id,
            "policy": {
                "omega_c": self.policy.omega_c,
                "k_adapters": self.policy.k_adapters,
                "init_thresh": self.policy.init_thresh,
                "decay": self.policy.decay,
                "max_decay_iters": self.policy.max_decay_iters,
                "negative_query": self.policy.negative_query,
            },
            "guardrails": {
                "ids": sorted(self.guardrails.id_blacklist),
                "words": sorted(self.guardrails.word_filters),
            },
            "details_n": self.details_n,
            "enhance_support": self.enhance_support,
            "budget": self.budget,
        }


def _provider(section: dict) -> ProviderConfig:
    return ProviderConfig(
        endpoint=section["endpoint"],
        model_id=section.get("model_id", "default"),
        api_key_ref=section.get("api_key_ref", "MANTA_API_KEY"),
        timeout=section.get("timeout", 30.0),
        max_retries=section.get("max_retries", 2),
    )


def load_config(path) -> EngineConfig:
    """Read an EngineConfig from a .toml or .json file."""
    path = Path(path)
    if path.suffix == ".toml":
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    else:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    cfg = EngineConfig()
    kwargs: dict = {}
    for key in ("completion", "embedding", "judge"):
        if key in data:
            kwargs[key] = _provider(data[key])
    if "policy" in data:
        pol = data["policy"]
        defaults = RetrievalPolicy()
        kwargs["policy"] = RetrievalPolicy(
            omega_c=pol.get("omega_c", defaults.omega_c),
            k_adapters=pol.get("k_adapters", defaults.k_adapters),
            init_thresh=pol.get("init_thresh", defaults.init_thresh),
            decay=pol.get("decay", defaults.decay),
            max_decay_iters=pol.get("max_decay_iters", defaults.max_decay_iters),
            negative_query=pol.get("negative_query", defaults.negative_query),
        )
    if "guardrails_file" in data:
        kwargs["guardrails"] = Guardrails.from_file(data["guardrails_file"])
    if "backend" in data:
        b = data["backend"]
        kwargs["backend"] = BackendConfig(
            base_url=b.get("base_url", ""),
            mode=b.get("mode", "stub"),
            model_switch_timeout=b.get("model_switch_timeout", 120.0),
        )
    for key in ("budget", "details_n", "enhance_support", "img2img_denoise",
                "store_dir", "checkpoint_snapshot", "adapter_snapshot",
                "queue_capacity"):
        if key in data:
            kwargs[key] = data[key]
    return replace(cfg, **kwargs)
