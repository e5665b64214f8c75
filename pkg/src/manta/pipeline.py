"""End-to-end orchestration: decompose, enhance, retrieve, compose, refine,
generate — one auditable run with every intermediate persisted.

Run records are one directory per run (JSON record plus image payloads) so
the store stays inspectable without a database. Stage timings live in a
sidecar file, not in the record itself, so records from identical inputs
are byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .backend import GeneratedImage, GenerationBackend
from .concepts import (
    Concept,
    ConceptMap,
    RawDecomposition,
    merge_details,
    parse_concept_map,
)
from .config import EngineConfig
from .enhancement import EnhancementRequest, enhance_concept
from .errors import MalformedDecomposition, MantaError, UnknownImage, UnknownRun
from .gateway import TokenLedger, complete
from .gating import SelectionResult, build_queries, query_loras, select_checkpoint
from .index import Collection
from .workflow import GenerationKnobs, GenerationWorkflow, compose, refine_passthrough

STAGES = (
    "decompose", "enhance", "build_queries", "select_checkpoint",
    "query_loras", "compose", "refine", "generate",
)


@dataclass
class RunRecord:
    request_id: str
    input_prompt: str
    concept_map: ConceptMap | None = None
    selection: SelectionResult | None = None
    workflow: GenerationWorkflow | None = None
    images: list[GeneratedImage] = field(default_factory=list)
    ledger_snapshot: dict = field(default_factory=dict)
    stages_completed: list[str] = field(default_factory=list)
    failure: dict | None = None
    parent_id: str | None = None
    timings: dict[str, float] = field(default_factory=dict)  # sidecar, not serialized

    def to_dict(self) -> dict:
        return {
            "request_id": self.request_id,
            "input_prompt": self.input_prompt,
            "parent_id": self.parent_id,
            "concept_map": self.concept_map.to_dict() if self.concept_map else None,
            "selection": self.selection.to_dict() if self.selection else None,
            "workflow": self.workflow.to_dict() if self.workflow else None,
            "images": [
                {
                    "index": i,
                    "seed_used": img.seed_used,
                    "sha256": hashlib.sha256(img.bytes).hexdigest(),
                    "feature_vector": list(img.feature_vector)
                    if img.feature_vector is not None else None,
                }
                for i, img in enumerate(self.images)
            ],
            "ledger_snapshot": self.ledger_snapshot,
            "stages_completed": list(self.stages_completed),
            "failure": self.failure,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)


class RunStore:
    """One directory per run; an append-only index preserves creation order."""

    def __init__(self, root):
        self.root = Path(root)
        (self.root / "runs").mkdir(parents=True, exist_ok=True)

    def _run_dir(self, run_id: str) -> Path:
        return self.root / "runs" / run_id

    def save(self, record: RunRecord) -> None:
        run_dir = self._run_dir(record.request_id)
        fresh = not run_dir.exists()
        (run_dir / "images").mkdir(parents=True, exist_ok=True)
        (run_dir / "record.json").write_text(record.to_json())
        (run_dir / "timings.json").write_text(
            json.dumps(record.timings, sort_keys=True, indent=1))
        for i, img in enumerate(record.images):
            (run_dir / "images" / f"img_{i}.png").write_bytes(img.bytes)
        if fresh:
            with open(self.root / "runs" / "index.txt", "a") as fh:
                fh.write(record.request_id + "\n")

    def list_ids(self) -> list[str]:
        index = self.root / "runs" / "index.txt"
        if not index.exists():
            return []
        seen, out = set(), []
        for line in index.read_text().splitlines():
            rid = line.strip()
            if rid and rid not in seen and self._run_dir(rid).exists():
                seen.add(rid)
                out.append(rid)
        return out

    def load_dict(self, run_id: str) -> dict:
        path = self._run_dir(run_id) / "record.json"
        if not path.exists():
            raise UnknownRun(f"run {run_id!r} not found")
        return json.loads(path.read_text())

    def image_bytes(self, run_id: str, index: int) -> bytes:
        path = self._run_dir(run_id) / "images" / f"img_{index}.png"
        if not (self._run_dir(run_id) / "record.json").exists():
            raise UnknownRun(f"run {run_id!r} not found")
        if not path.exists():
            raise UnknownImage(f"run {run_id!r} has no image {index}")
        return path.read_bytes()

    def image(self, run_id: str, index: int) -> GeneratedImage:
        record = self.load_dict(run_id)
        images = record.get("images", [])
        if index < 0 or index >= len(images):
            raise UnknownImage(f"run {run_id!r} has no image {index}")
        meta = images[index]
        fv = meta.get("feature_vector")
        return GeneratedImage(
            bytes=self.image_bytes(run_id, index),
            seed_used=meta["seed_used"],
            feature_vector=tuple(fv) if fv is not None else None,
        )


def _decompose_prompt_text(prompt: str) -> str:
    template = resources.files("manta.data").joinpath("decompose_prompt.txt").read_text()
    return template.replace("{prompt}", prompt)


def _request_id(*parts: str) -> str:
    h = hashlib.sha256()
    for p in parts:
        h.update(p.encode("utf-8", errors="replace"))
        h.update(b"\x00")
    return h.hexdigest()[:16]


class Engine:
    """Binds config, loaded collections, a backend, and a run store."""

    def __init__(self, config: EngineConfig, checkpoints: Collection,
                 adapters: Collection, backend: GenerationBackend | None = None,
                 store: RunStore | None = None):
        if checkpoints.kind != "checkpoint":
            raise ValueError("checkpoints collection has wrong kind")
        if adapters.kind != "adapter":
            raise ValueError("adapters collection has wrong kind")
        self.config = config
        self.checkpoints = checkpoints
        self.adapters = adapters
        self.backend = backend or GenerationBackend(config.backend)
        self.store = store or RunStore(config.store_dir)

    # --- stage helpers --------------------------------------------------------

    def _decompose(self, prompt: str, ledger: TokenLedger) -> ConceptMap:
        if not prompt.strip():
            raise MalformedDecomposition("input prompt is empty")
        raw = complete(self.config.completion, _decompose_prompt_text(prompt), ledger)
        return parse_concept_map(RawDecomposition(source_text=raw))

    def _enhance(self, m: ConceptMap, ledger: TokenLedger) -> ConceptMap:
        def enhanced(c: Concept) -> Concept:
            req = EnhancementRequest(concept=c, n=self.config.details_n)
            return enhance_concept(self.config.completion, req, ledger)

        main = enhanced(m.main)
        support = tuple(
            enhanced(c) if self.config.enhance_support else c for c in m.support
        )
        return ConceptMap(main=main, support=support,
                          image_styles=m.image_styles,
                          image_details=m.image_details)

    def _select(self, m: ConceptMap, ledger: TokenLedger) -> SelectionResult:
        positives, negative = build_queries(
            m, self.config.embedding, ledger, self.config.policy)
        trace: list[str] = []
        checkpoint = select_checkpoint(
            self.checkpoints, positives, negative,
            self.config.policy, self.config.guardrails, trace=trace)
        adapters = query_loras(
            self.adapters, positives, negative,
            self.config.policy, self.config.guardrails, trace=trace)
        return SelectionResult(checkpoint=checkpoint,
                               adapters=tuple(adapters), trace=tuple(trace))

    # --- public operations ----------------------------------------------------

    def compose_only(self, prompt: str, knobs: GenerationKnobs | None = None,
                     concept_map: ConceptMap | None = None,
                     ledger: TokenLedger | None = None,
                     ) -> tuple[ConceptMap, SelectionResult, GenerationWorkflow]:
        """Dry run: everything up to (not including) image generation."""
        ledger = ledger or TokenLedger(budget=self.config.budget)
        m = concept_map or self._enhance(self._decompose(prompt, ledger), ledger)
        sel = self._select(m, ledger)
        wf = compose(m, sel, knobs,
                     negative_prompt=self.config.policy.negative_query)
        return m, sel, refine_passthrough(wf)

    def run(self, prompt: str, knobs: GenerationKnobs | None = None,
            concept_map: ConceptMap | None = None) -> RunRecord:
        """Full pipeline. Stage errors are recorded and stop later stages;
        a partial record with a failure marker is still persisted."""
        knobs = knobs or GenerationKnobs()
        ledger = TokenLedger(budget=self.config.budget)
        request_id = _request_id(
            "run", prompt,
            json.dumps(knobs.__dict__, sort_keys=True),
            concept_map.to_json() if concept_map else "",
            json.dumps(self.config.fingerprint_dict(), sort_keys=True),
        )
        record = RunRecord(request_id=request_id, input_prompt=prompt)
        stage = "decompose"
        try:
            t0 = time.perf_counter()
            m = concept_map or self._decompose(prompt, ledger)
            record.timings["decompose"] = time.perf_counter() - t0
            record.stages_completed.append("decompose")

            stage = "enhance"
            t0 = time.perf_counter()
            if concept_map is None:
                m = self._enhance(m, ledger)
            record.concept_map = m
            record.timings["enhance"] = time.perf_counter() - t0
            record.stages_completed.append("enhance")

            stage = "select"
            t0 = time.perf_counter()
            record.selection = self._select(m, ledger)
            record.timings["select"] = time.perf_counter() - t0
            record.stages_completed.extend(
                ["build_queries", "select_checkpoint", "query_loras"])

            stage = "compose"
            t0 = time.perf_counter()
            wf = compose(m, record.selection, knobs,
                         negative_prompt=self.config.policy.negative_query)
            record.workflow = refine_passthrough(wf)
            record.timings["compose"] = time.perf_counter() - t0
            record.stages_completed.extend(["compose", "refine"])

            stage = "generate"
            t0 = time.perf_counter()
            record.images = self.backend.txt2img(record.workflow)
            record.timings["generate"] = time.perf_counter() - t0
            record.stages_completed.append("generate")
        except MantaError as exc:
            record.failure = {"stage": stage, "error": str(exc)}
        record.ledger_snapshot = ledger.snapshot()
        self.store.save(record)
        return record

    def refine(self, run_id: str, image_index: int,
               denoise: float | None = None) -> RunRecord:
        """img2img on one stored image with its stored workflow; the child
        record links back to the parent run."""
        denoise = self.config.img2img_denoise if denoise is None else denoise
        parent = self.store.load_dict(run_id)
        image = self.store.image(run_id, image_index)
        if parent.get("workflow") is None:
            raise UnknownRun(f"run {run_id!r} has no workflow to refine with")
        wf = GenerationWorkflow.from_dict(parent["workflow"])
        child_id = _request_id("refine", run_id, str(image_index), f"{denoise:g}")
        record = RunRecord(
            request_id=child_id,
            input_prompt=parent.get("input_prompt", ""),
            parent_id=run_id,
            concept_map=ConceptMap.from_dict(parent["concept_map"])
            if parent.get("concept_map") else None,
            workflow=wf,
        )
        stage = "generate"
        try:
            t0 = time.perf_counter()
            record.images = self.backend.img2img(image, wf, denoise)
            record.timings["generate"] = time.perf_counter() - t0
            record.stages_completed.append("generate")
        except MantaError as exc:
            record.failure = {"stage": stage, "error": str(exc)}
        record.ledger_snapshot = TokenLedger().snapshot()
        self.store.save(record)
        return record
