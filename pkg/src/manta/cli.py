"""Command line interface: ingest, run, refine, eval, serve."""

from __future__ import annotations

import json
import sys

import click

from .backend import GenerationBackend
from .config import EngineConfig, load_config
from .errors import MantaError
from .gateway import CRITERIA, TokenLedger, judge_pair
from .index import load_snapshot, save_snapshot
from .ingest import build_collection, build_metadata_baseline, load_dataset
from .pipeline import Engine
from .workflow import GenerationKnobs


def _load_engine(config: EngineConfig) -> Engine:
    if not config.checkpoint_snapshot or not config.adapter_snapshot:
        raise click.UsageError(
            "config must set checkpoint_snapshot and adapter_snapshot "
            "(run `manta ingest` first)"
        )
    return Engine(
        config,
        checkpoints=load_snapshot(config.checkpoint_snapshot),
        adapters=load_snapshot(config.adapter_snapshot),
        backend=GenerationBackend(config.backend),
    )


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True),
              help="TOML/JSON engine config file.")
@click.pass_context
def main(ctx, config_path):
    """Prompt-to-workflow engine for diffusion image generation."""
    ctx.obj = load_config(config_path) if config_path else EngineConfig()


@main.command()
@click.option("--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("--collection", "name", required=True)
@click.option("--kind", type=click.Choice(["checkpoint", "adapter"]), required=True)
@click.option("--metadata-baseline", is_flag=True, default=False,
              help="Embed title+description instead of exemplar prompts.")
@click.option("--output", "output_path", default=None,
              help="Snapshot path (default: <collection>.mnta).")
@click.pass_obj
def ingest(config: EngineConfig, input_path, name, kind, metadata_baseline,
           output_path):
    """Build a quantized collection snapshot from a dataset dump."""
    loaded = load_dataset(input_path)
    records = [r for r in loaded.records if r.kind == kind]
    if not records:
        raise click.ClickException(f"no {kind} records in {input_path}")
    ledger = TokenLedger(budget=config.budget)
    builder = build_metadata_baseline if metadata_baseline else build_collection
    collection = builder(records, config.embedding, ledger, name=name)
    output_path = output_path or f"{name}.mnta"
    save_snapshot(collection, output_path)
    click.echo(json.dumps({
        "snapshot": output_path,
        "records": len(collection),
        "skipped": loaded.skipped,
        "embedding_tokens": ledger.embedding_tokens,
    }, indent=1))


@main.command()
@click.option("--prompt", required=True)
@click.option("--cfg", "cfg_scale", type=float, default=7.0)
@click.option("--details", "details_n", type=int, default=None)
@click.option("--seed", type=int, default=0)
@click.option("--dump-workflow", is_flag=True, default=False)
@click.pass_obj
def run(config: EngineConfig, prompt, cfg_scale, details_n, seed, dump_workflow):
    """Run the full pipeline on one prompt."""
    if details_n is not None:
        from dataclasses import replace
        config = replace(config, details_n=details_n)
    engine = _load_engine(config)
    record = engine.run(prompt, GenerationKnobs(cfg_scale=cfg_scale, seed=seed))
    if dump_workflow and record.workflow:
        click.echo(record.workflow.to_json())
    else:
        click.echo(record.to_json())
    if record.failure:
        sys.exit(1)


@main.command()
@click.option("--run", "run_id", required=True)
@click.option("--image", "image_index", type=int, default=0)
@click.option("--denoise", type=float, default=None)
@click.pass_obj
def refine(config: EngineConfig, run_id, image_index, denoise):
    """img2img refinement of a stored run's image."""
    engine = _load_engine(config)
    record = engine.refine(run_id, image_index, denoise)
    click.echo(record.to_json())
    if record.failure:
        sys.exit(1)


@main.command("eval")
@click.option("--prompts", "prompts_path", required=True,
              type=click.Path(exists=True), help="One prompt per line.")
@click.option("--against", default="no-adapters")
@click.option("--criteria", default=",".join(CRITERIA))
@click.option("--output", "output_path", default=None,
              help="Write the JSON report here instead of stdout.")
@click.pass_obj
def eval_cmd(config: EngineConfig, prompts_path, against, criteria, output_path):
    """Pairwise evaluation of the full pipeline against a baseline."""
    from .evaluation import evaluate_pair
    from .workflow import GenerationWorkflow

    criteria = [c.strip() for c in criteria.split(",") if c.strip()]
    bad = [c for c in criteria if c not in CRITERIA]
    if bad:
        raise click.ClickException(f"unknown criteria: {bad}")
    with open(prompts_path, encoding="utf-8") as fh:
        prompts = [line.strip() for line in fh if line.strip()]
    engine = _load_engine(config)

    def gen_full(prompt):
        record = engine.run(prompt)
        if record.failure:
            raise MantaError(record.failure["error"])
        return record.images

    def gen_baseline(prompt):
        wf = GenerationWorkflow(
            checkpoint_id=engine.checkpoints.records[0][0].id,
            adapters=(), positive_prompt=prompt,
            negative_prompt=config.policy.negative_query,
            cfg_scale=7.0, seed=0, width=512, height=512, batch_size=3,
        )
        return engine.backend.txt2img(wf)

    ledger = TokenLedger()

    def judge(images_a, images_b, criterion):
        return judge_pair(config.judge, images_a, images_b, criterion, ledger)

    result = evaluate_pair(prompts, gen_full, gen_baseline, judge,
                           criteria=criteria, system_a="manta",
                           system_b=against)
    report = json.dumps(result.to_dict(), indent=1)
    if output_path:
        with open(output_path, "w", encoding="utf-8") as fh:
            fh.write(report)
        click.echo(json.dumps(result.summary(), indent=1))
    else:
        click.echo(report)


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8331)
@click.option("--ui-dir", default=None, help="Static UI assets to serve at /ui.")
@click.pass_obj
def serve(config: EngineConfig, host, port, ui_dir):
    """Run the HTTP service."""
    import uvicorn

    from .service import create_app

    engine = _load_engine(config)
    uvicorn.run(create_app(engine, ui_dir=ui_dir), host=host, port=port)


if __name__ == "__main__":
    main()
