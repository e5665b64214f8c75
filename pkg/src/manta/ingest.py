"""Dataset ingestion: load adapter/checkpoint dumps and build quantized
collections from exemplar prompts (or from title+description metadata for
the token-cost baseline mode).

Input schema: a JSON array of objects
``{id, type, base_model, name, prompts: [text...], description?, nsfw?}``;
the first prompt is the exemplar. Entries without a usable prompt are
skipped with a warning count rather than failing the whole dump.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from importlib import resources

from .errors import DuplicateId, MissingMetadata, SchemaError, UnreadableFile
from .gateway import ProviderConfig, TokenLedger, embed
from .index import Collection, DocumentRecord, quantize

logger = logging.getLogger(__name__)

FIXTURE_RESOURCE = "model_registry_fixture.json"


@dataclass(frozen=True)
class LoadResult:
    records: tuple[DocumentRecord, ...]
    skipped: int


def _record_from_entry(entry: dict, index: int) -> DocumentRecord | None:
    if not isinstance(entry, dict):
        raise SchemaError(f"entry {index} is not an object")
    rid = entry.get("id")
    kind = entry.get("type")
    if not rid or kind not in ("checkpoint", "adapter"):
        raise SchemaError(f"entry {index} lacks id/type")
    prompts = entry.get("prompts") or []
    exemplar = prompts[0].strip() if prompts and isinstance(prompts[0], str) else ""
    if not exemplar:
        return None
    flags = set()
    if entry.get("nsfw"):
        flags.add("nsfw")
    return DocumentRecord(
        id=str(rid),
        kind=kind,
        exemplar_prompt=exemplar,
        display_name=str(entry.get("name", "")),
        base_model=str(entry.get("base_model", "")),
        flags=frozenset(flags),
        description=str(entry.get("description", "")),
    )


def load_dataset(path) -> LoadResult:
    """Parse a dump file into records, skipping entries without an exemplar."""
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except OSError as exc:
        raise UnreadableFile(f"cannot read {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path} is not valid JSON: {exc}")
    if not isinstance(payload, list):
        raise SchemaError(f"{path}: top level must be a JSON array")
    records: list[DocumentRecord] = []
    skipped = 0
    for i, entry in enumerate(payload):
        rec = _record_from_entry(entry, i)
        if rec is None:
            skipped += 1
        else:
            records.append(rec)
    if skipped:
        logger.warning("skipped %d entries without exemplar prompts", skipped)
    return LoadResult(records=tuple(records), skipped=skipped)


def bundled_fixture_path():
    return resources.files("manta.data").joinpath(FIXTURE_RESOURCE)


def _assemble(records, texts, name: str, kind: str, cfg: ProviderConfig,
              ledger: TokenLedger, tokenizer=None, client=None) -> Collection:
    seen: set[str] = set()
    for rec in records:
        if rec.id in seen:
            raise DuplicateId(f"duplicate record id {rec.id!r} in input")
        seen.add(rec.id)
    vectors = embed(cfg, texts, ledger, tokenizer=tokenizer, client=client)
    pairs = [(rec, quantize(vec)) for rec, vec in zip(records, vectors)]
    return Collection(name=name, kind=kind, dimension=vectors[0].dimension,
                      records=pairs)


def build_collection(records, cfg: ProviderConfig, ledger: TokenLedger,
                     name: str = "collection", tokenizer=None,
                     client=None) -> Collection:
    """One embedding per record from its exemplar prompt."""
    if not records:
        raise ValueError("records must be non-empty")
    kinds = {r.kind for r in records}
    if len(kinds) != 1:
        raise ValueError(f"records must share one kind, got {sorted(kinds)}")
    texts = [r.exemplar_prompt for r in records]
    return _assemble(records, texts, name, kinds.pop(), cfg, ledger,
                     tokenizer=tokenizer, client=client)


def build_metadata_baseline(records, cfg: ProviderConfig, ledger: TokenLedger,
                            name: str = "metadata-baseline", tokenizer=None,
                            client=None) -> Collection:
    """Documents built from title+description text; only for token comparisons."""
    if not records:
        raise ValueError("records must be non-empty")
    missing = [r.id for r in records if not r.description]
    if missing:
        raise MissingMetadata(
            f"{len(missing)} records lack descriptions (e.g. {missing[:3]})"
        )
    kinds = {r.kind for r in records}
    if len(kinds) != 1:
        raise ValueError(f"records must share one kind, got {sorted(kinds)}")
    texts = [f"{r.display_name} {r.description}".strip() for r in records]
    return _assemble(records, texts, name, kinds.pop(), cfg, ledger,
                     tokenizer=tokenizer, client=client)
