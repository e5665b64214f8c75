"""HTTP facade over the pipeline for the studio UI and programmatic clients."""

from __future__ import annotations

import base64
import threading
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .backend import GeneratedImage
from .concepts import ConceptMap
from .errors import (
    BackendUnavailable,
    MalformedDecomposition,
    MantaError,
    ModelNotFound,
    ProviderError,
    UnknownImage,
    UnknownRun,
)
from .evaluation import evaluate_pair
from .gateway import CRITERIA, judge_pair, TokenLedger
from .pipeline import Engine, RunRecord
from .workflow import GenerationKnobs, GenerationWorkflow


class KnobsModel(BaseModel):
    cfg_scale: float = 7.0
    seed: int = 0
    width: int = 512
    height: int = 512
    batch_size: int = 3

    def to_knobs(self) -> GenerationKnobs:
        return GenerationKnobs(cfg_scale=self.cfg_scale, seed=self.seed,
                               width=self.width, height=self.height,
                               batch_size=self.batch_size)


class ComposeRequest(BaseModel):
    prompt: str
    knobs: KnobsModel | None = None
    concept_map: dict | None = None


class GenerateRequest(ComposeRequest):
    pass


class RefineRequest(BaseModel):
    run_id: str
    image_index: int = 0
    denoise: float = Field(default=0.5, gt=0.0, le=1.0)


class EvaluateRequest(BaseModel):
    prompts: list[str]
    criteria: list[str] = list(CRITERIA)
    against: str = "no-adapters"


def _images_payload(images: list[GeneratedImage]) -> list[dict]:
    return [
        {
            "index": i,
            "seed_used": img.seed_used,
            "base64": base64.b64encode(img.bytes).decode("ascii"),
            "feature_vector": list(img.feature_vector)
            if img.feature_vector is not None else None,
        }
        for i, img in enumerate(images)
    ]


def _run_payload(record: RunRecord) -> dict:
    body = record.to_dict()
    body["run_id"] = record.request_id
    body["images"] = _images_payload(record.images)
    body["tokens"] = record.ledger_snapshot
    return body


def create_app(engine: Engine, ui_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="manta", version="0.1.0", openapi_url="/v1/spec")
    busy = threading.Semaphore(engine.config.queue_capacity)

    @app.exception_handler(RequestValidationError)
    async def malformed(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.exception_handler(MantaError)
    async def engine_error(request: Request, exc: MantaError):
        if isinstance(exc, (UnknownRun, UnknownImage)):
            return JSONResponse(status_code=404, content={"error": str(exc)})
        if isinstance(exc, MalformedDecomposition):
            return JSONResponse(status_code=400, content={"error": str(exc)})
        if isinstance(exc, (ProviderError, BackendUnavailable, ModelNotFound)):
            return JSONResponse(
                status_code=502,
                content={"error": str(exc), "stage": type(exc).__name__},
            )
        return JSONResponse(status_code=500, content={"error": str(exc)})

    def _concept_map(req: ComposeRequest) -> ConceptMap | None:
        return ConceptMap.from_dict(req.concept_map) if req.concept_map else None

    @app.post("/v1/compose")
    def compose_endpoint(req: ComposeRequest):
        knobs = (req.knobs or KnobsModel()).to_knobs()
        m, sel, wf = engine.compose_only(req.prompt, knobs,
                                         concept_map=_concept_map(req))
        return {"concept_map": m.to_dict(), "selection": sel.to_dict(),
                "workflow": wf.to_dict()}

    @app.post("/v1/generate")
    def generate_endpoint(req: GenerateRequest):
        if not busy.acquire(blocking=False):
            return JSONResponse(status_code=409,
                                content={"error": "backend queue at capacity"})
        try:
            record = engine.run(req.prompt, (req.knobs or KnobsModel()).to_knobs(),
                                concept_map=_concept_map(req))
        finally:
            busy.release()
        if record.failure:
            return JSONResponse(
                status_code=502,
                content={"error": record.failure["error"],
                         "stage": record.failure["stage"],
                         "run_id": record.request_id},
            )
        return _run_payload(record)

    @app.post("/v1/refine")
    def refine_endpoint(req: RefineRequest):
        if not busy.acquire(blocking=False):
            return JSONResponse(status_code=409,
                                content={"error": "backend queue at capacity"})
        try:
            record = engine.refine(req.run_id, req.image_index, req.denoise)
        finally:
            busy.release()
        if record.failure:
            return JSONResponse(
                status_code=502,
                content={"error": record.failure["error"],
                         "stage": record.failure["stage"],
                         "run_id": record.request_id},
            )
        return _run_payload(record)

    @app.get("/v1/runs")
    def list_runs():
        return {"runs": engine.store.list_ids()}

    @app.get("/v1/runs/{run_id}")
    def get_run(run_id: str):
        return engine.store.load_dict(run_id)

    @app.get("/v1/runs/{run_id}/images/{index}")
    def get_image(run_id: str, index: int):
        return Response(content=engine.store.image_bytes(run_id, index),
                        media_type="image/png")

    @app.get("/v1/collections")
    def collections():
        return {"collections": [engine.checkpoints.stats(),
                                engine.adapters.stats()]}

    @app.post("/v1/evaluate")
    def evaluate_endpoint(req: EvaluateRequest):
        bad = [c for c in req.criteria if c not in CRITERIA]
        if bad:
            return JSONResponse(status_code=400,
                                content={"error": f"unknown criteria {bad}"})

        def gen_full(prompt: str):
            record = engine.run(prompt)
            if record.failure:
                raise MantaError(record.failure["error"])
            return record.images

        def gen_baseline(prompt: str):
            # same checkpoint, raw prompt, no adapters or enhancement
            wf = GenerationWorkflow(
                checkpoint_id=engine.checkpoints.records[0][0].id,
                adapters=(), positive_prompt=prompt,
                negative_prompt=engine.config.policy.negative_query,
                cfg_scale=7.0, seed=0, width=512, height=512, batch_size=3,
            )
            return engine.backend.txt2img(wf)

        ledger = TokenLedger()

        def judge(images_a, images_b, criterion):
            return judge_pair(engine.config.judge, images_a, images_b,
                              criterion, ledger)

        run = evaluate_pair(req.prompts, gen_full, gen_baseline, judge,
                            criteria=req.criteria,
                            system_a="manta", system_b=req.against)
        return run.to_dict()

    if ui_dir and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
