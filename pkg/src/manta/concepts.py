"""Structured concept representation: parsing, validation, queries, prompt assembly.

A free-text prompt is decomposed into one *main* concept, zero or more
*support* concepts, and image-level style/detail fragments. Everything
downstream (retrieval queries, prompt assembly) works off this structure.
"""

from __future__ import annotations

import ast
import json
import re
from dataclasses import dataclass, field

from .errors import MalformedDecomposition

_WS = re.compile(r"\s+")


def _collapse(text: str) -> str:
    return _WS.sub(" ", text).strip()


def _dedup_ci(items: list[str]) -> tuple[str, ...]:
    """Order-preserving, case-insensitive dedup; first occurrence's casing wins."""
    seen: set[str] = set()
    out: list[str] = []
    for item in items:
        item = _collapse(item)
        if not item:
            continue
        key = item.lower()
        if key not in seen:
            seen.add(key)
            out.append(item)
    return tuple(out)


@dataclass(frozen=True)
class Concept:
    """One subject within a prompt: a name plus detail and style fragments."""

    name: str
    details: tuple[str, ...] = ()
    styles: tuple[str, ...] = ()

    def __post_init__(self):
        name = _collapse(self.name)
        if not name:
            raise MalformedDecomposition("concept name must be non-empty")
        object.__setattr__(self, "name", name)
        object.__setattr__(self, "details", _dedup_ci(list(self.details)))
        object.__setattr__(self, "styles", _dedup_ci(list(self.styles)))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "details": list(self.details),
            "styles": list(self.styles),
        }


@dataclass(frozen=True)
class ConceptMap:
    """Full decomposition of a prompt: main concept, supports, image-level fragments."""

    main: Concept
    support: tuple[Concept, ...] = ()
    image_styles: tuple[str, ...] = ()
    image_details: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "support", tuple(self.support))
        object.__setattr__(self, "image_styles", _dedup_ci(list(self.image_styles)))
        object.__setattr__(self, "image_details", _dedup_ci(list(self.image_details)))
        main_key = self.main.name.lower()
        for c in self.support:
            if c.name.lower() == main_key:
                raise MalformedDecomposition(
                    f"support concept duplicates main concept name: {c.name!r}"
                )

    def to_dict(self) -> dict:
        return {
            "main": self.main.to_dict(),
            "support": [c.to_dict() for c in self.support],
            "image": {
                "styles": list(self.image_styles),
                "details": list(self.image_details),
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, payload: dict) -> "ConceptMap":
        return _map_from_mapping(payload)


@dataclass(frozen=True)
class RawDecomposition:
    """Verbatim LLM decomposition output, kept for audit."""

    source_text: str


def _str_list(value, label: str) -> list[str]:
    if value is None:
        return []
    if not isinstance(value, list):
        raise MalformedDecomposition(f"{label} must be a list, got {type(value).__name__}")
    return [str(v) for v in value]


def _concept_from_mapping(payload, label: str) -> Concept:
    if not isinstance(payload, dict):
        raise MalformedDecomposition(f"{label} must be a mapping")
    name = payload.get("name")
    if not isinstance(name, str) or not name.strip():
        raise MalformedDecomposition(f"{label} has no usable name")
    return Concept(
        name=name,
        details=tuple(_str_list(payload.get("details"), f"{label}.details")),
        styles=tuple(_str_list(payload.get("styles"), f"{label}.styles")),
    )


def _map_from_mapping(payload: dict) -> ConceptMap:
    if "main" not in payload:
        raise MalformedDecomposition("decomposition lacks a main concept")
    main = _concept_from_mapping(payload["main"], "main")
    support_raw = payload.get("support") or []
    if not isinstance(support_raw, list):
        raise MalformedDecomposition("support must be a list")
    support = tuple(
        _concept_from_mapping(s, f"support[{i}]") for i, s in enumerate(support_raw)
    )
    image = payload.get("image") or {}
    if not isinstance(image, dict):
        raise MalformedDecomposition("image must be a mapping")
    return ConceptMap(
        main=main,
        support=support,
        image_styles=tuple(_str_list(image.get("styles"), "image.styles")),
        image_details=tuple(_str_list(image.get("details"), "image.details")),
    )


_FENCE = re.compile(r"^```[a-zA-Z]*\n|```$", re.MULTILINE)


def parse_concept_map(raw: RawDecomposition) -> ConceptMap:
    """Parse an LLM decomposition into a validated ConceptMap.

    Accepts strict JSON as well as Python-literal style output (single
    quotes), optionally wrapped in a code fence. Unknown keys are ignored.
    """
    text = _FENCE.sub("", raw.source_text).strip()
    if not text:
        raise MalformedDecomposition("empty decomposition output")
    payload = None
    try:
        payload = json.loads(text)
    except (json.JSONDecodeError, ValueError):
        try:
            payload = ast.literal_eval(text)
        except (ValueError, SyntaxError):
            # fall back to the outermost braced region
            start, end = text.find("{"), text.rfind("}")
            if start != -1 and end > start:
                snippet = text[start : end + 1]
                for loader in (json.loads, ast.literal_eval):
                    try:
                        payload = loader(snippet)
                        break
                    except (ValueError, SyntaxError):
                        continue
    if not isinstance(payload, dict):
        raise MalformedDecomposition("decomposition is not a mapping")
    return _map_from_mapping(payload)


def flatten_to_query(c: Concept) -> str:
    """Retrieval query text: name, then details, then styles, space-joined."""
    return _collapse(" ".join([c.name, *c.details, *c.styles]))


def assemble_prompt(m: ConceptMap) -> str:
    """Deterministic positive prompt from a concept map.

    Emits comma-separated fragments: each concept contributes its name,
    then its details, then its styles (main first, supports in order),
    followed by image-level details and styles as global suffixes.
    Duplicate fragments are dropped case-insensitively.
    """
    fragments: list[str] = []
    for c in (m.main, *m.support):
        fragments.append(c.name)
        fragments.extend(c.details)
        fragments.extend(c.styles)
    fragments.extend(m.image_details)
    fragments.extend(m.image_styles)
    return ", ".join(_dedup_ci(fragments))


def merge_details(c: Concept, extra: list[str]) -> Concept:
    """Extend a concept's details, order-preserving, case-insensitive dedup."""
    return Concept(name=c.name, details=(*c.details, *extra), styles=c.styles)
