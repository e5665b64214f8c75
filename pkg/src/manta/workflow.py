"""Workflow assembly: checkpoint + adapters + prompts + generation knobs.

Adapter activation uses in-prompt "<lora:{id}:{weight}>" tags, the de-facto
convention of the webui backends this engine dispatches to.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

from .concepts import ConceptMap, assemble_prompt
from .gating import SelectionResult, default_negative_query

DEFAULT_CFG = 7.0
DEFAULT_SIZE = 512
DEFAULT_BATCH = 3


@dataclass(frozen=True)
class GenerationKnobs:
    cfg_scale: float = DEFAULT_CFG
    seed: int = 0
    width: int = DEFAULT_SIZE
    height: int = DEFAULT_SIZE
    batch_size: int = DEFAULT_BATCH


@dataclass(frozen=True)
class GenerationWorkflow:
    checkpoint_id: str
    adapters: tuple[tuple[str, float], ...]
    positive_prompt: str
    negative_prompt: str
    cfg_scale: float
    seed: int
    width: int
    height: int
    batch_size: int

    def __post_init__(self):
        if self.width < 512 or self.height < 512:
            raise ValueError("width and height must be at least 512")
        if self.width % 8 or self.height % 8:
            raise ValueError("width and height must be multiples of 8")
        if self.cfg_scale <= 0:
            raise ValueError("cfg_scale must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        for aid, weight in self.adapters:
            if not (0 < weight <= 1):
                raise ValueError(f"adapter {aid!r} weight {weight} not in (0, 1]")

    def to_dict(self) -> dict:
        return {
            "checkpoint_id": self.checkpoint_id,
            "adapters": [{"id": aid, "weight": w} for aid, w in self.adapters],
            "positive_prompt": self.positive_prompt,
            "negative_prompt": self.negative_prompt,
            "cfg_scale": self.cfg_scale,
            "seed": self.seed,
            "width": self.width,
            "height": self.height,
            "batch_size": self.batch_size,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, payload: dict) -> "GenerationWorkflow":
        return cls(
            checkpoint_id=payload["checkpoint_id"],
            adapters=tuple((a["id"], float(a["weight"]))
                           for a in payload.get("adapters", [])),
            positive_prompt=payload["positive_prompt"],
            negative_prompt=payload["negative_prompt"],
            cfg_scale=float(payload["cfg_scale"]),
            seed=int(payload["seed"]),
            width=int(payload["width"]),
            height=int(payload["height"]),
            batch_size=int(payload["batch_size"]),
        )


def lora_tag(adapter_id: str, weight: float) -> str:
    return f"<lora:{adapter_id}:{weight:g}>"


def compose(m: ConceptMap, sel: SelectionResult,
            knobs: GenerationKnobs | None = None,
            negative_prompt: str | None = None) -> GenerationWorkflow:
    """Deterministic workflow from a concept map and a selection result."""
    knobs = knobs or GenerationKnobs()
    prompt = assemble_prompt(m)
    tags = " ".join(lora_tag(rec.id, w) for rec, w in sel.adapters)
    if tags:
        prompt = f"{prompt} {tags}" if prompt else tags
    return GenerationWorkflow(
        checkpoint_id=sel.checkpoint.id,
        adapters=tuple((rec.id, w) for rec, w in sel.adapters),
        positive_prompt=prompt,
        negative_prompt=negative_prompt if negative_prompt is not None
        else default_negative_query(),
        cfg_scale=knobs.cfg_scale,
        seed=knobs.seed,
        width=knobs.width,
        height=knobs.height,
        batch_size=knobs.batch_size,
    )


def vary_cfg(w: GenerationWorkflow, values: list[float]) -> list[GenerationWorkflow]:
    """One clone per value, differing only in cfg_scale (CFG sweep harness)."""
    if not values:
        raise ValueError("values must be non-empty")
    return [replace(w, cfg_scale=float(v)) for v in values]


def refine_passthrough(w: GenerationWorkflow) -> GenerationWorkflow:
    """Identity refinement stage; the hook point for future alignment passes."""
    return w
