"""Provider gateway: chat completion, embeddings, tokenization, budget enforcement.

Every provider call goes through this module and charges a shared
:class:`TokenLedger`, so a run can never silently exceed its token budget.
Two provider families exist:

* HTTP providers with an OpenAI-compatible request shape (configurable base
  URL + model id, API key via a named environment variable).
* A deterministic mock provider, selected with endpoint ``mock://<seed>``,
  which makes the whole pipeline reproducible at desk scale.
"""

from __future__ import annotations

import hashlib
import os
import re
import threading
import time
from dataclasses import dataclass, field

import httpx

from .errors import (
    BudgetExceeded,
    DimensionMismatch,
    ProviderError,
    UnparseableVerdict,
)

MOCK_EMBED_DIM = 64

CRITERIA = ("diversity", "quality", "alignment")


# --- tokenization ------------------------------------------------------------

class WhitespaceTokenizer:
    """Counts whitespace-separated tokens. Machine-independent; used in tests."""

    def count(self, text: str) -> int:
        return len(text.split())


DEFAULT_TOKENIZER = WhitespaceTokenizer()


def count_tokens(text: str, tokenizer=None) -> int:
    """Deterministic token count under the configured tokenizer (default whitespace)."""
    return (tokenizer or DEFAULT_TOKENIZER).count(text)


# --- core types --------------------------------------------------------------

@dataclass(frozen=True)
class ProviderConfig:
    endpoint: str
    model_id: str = "default"
    api_key_ref: str = "MANTA_API_KEY"
    timeout: float = 30.0
    max_retries: int = 2

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be non-negative")

    @property
    def is_mock(self) -> bool:
        return self.endpoint.startswith("mock://")

    @property
    def mock_seed(self) -> str:
        return self.endpoint[len("mock://"):]


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]
    dimension: int

    def __post_init__(self):
        if self.dimension != len(self.values):
            raise DimensionMismatch(
                f"declared dimension {self.dimension} != {len(self.values)} values"
            )
        if not all(v == v and abs(v) != float("inf") for v in self.values):
            raise ValueError("embedding contains non-finite values")

    @classmethod
    def of(cls, values) -> "EmbeddingVector":
        vals = tuple(float(v) for v in values)
        return cls(values=vals, dimension=len(vals))


class TokenLedger:
    """Running count of completion/embedding tokens against an optional budget.

    Totals only grow; increments are atomic so concurrent callers can share
    one ledger.
    """

    def __init__(self, budget: int | None = None):
        if budget is not None and budget <= 0:
            raise ValueError("budget must be positive when set")
        self.budget = budget
        self._lock = threading.Lock()
        self._completion = 0
        self._embedding = 0

    @property
    def completion_tokens(self) -> int:
        return self._completion

    @property
    def embedding_tokens(self) -> int:
        return self._embedding

    @property
    def total(self) -> int:
        return self._completion + self._embedding

    def check_can_spend(self, projected: int) -> None:
        """Raise BudgetExceeded if `projected` more tokens would overflow the budget."""
        if self.budget is None:
            return
        with self._lock:
            if self._completion + self._embedding + projected > self.budget:
                raise BudgetExceeded(
                    f"projected {projected} tokens over budget "
                    f"({self.total}/{self.budget} used)"
                )

    def charge_completion(self, n: int) -> None:
        if n < 0:
            raise ValueError("token charge must be non-negative")
        with self._lock:
            self._completion += n

    def charge_embedding(self, n: int) -> None:
        if n < 0:
            raise ValueError("token charge must be non-negative")
        with self._lock:
            self._embedding += n

    def snapshot(self) -> dict:
        with self._lock:
            return {
                "completion_tokens": self._completion,
                "embedding_tokens": self._embedding,
                "budget": self.budget,
            }


@dataclass(frozen=True)
class JudgeVerdict:
    criterion: str
    winner: str
    rationale: str

    def __post_init__(self):
        if self.criterion not in CRITERIA:
            raise ValueError(f"unknown criterion {self.criterion!r}")
        if self.winner not in ("A", "B"):
            raise ValueError("winner must be 'A' or 'B'")


# --- deterministic mock provider ---------------------------------------------

def _digest(*parts: str) -> str:
    h = hashlib.sha256()
    for p in parts:
        h.update(p.encode("utf-8", errors="replace"))
        h.update(b"\x00")
    return h.hexdigest()


# connector phrases splitting a prompt into main / support subjects
_CONNECTORS = re.compile(
    r"\s+(?:walking|holding|riding|carrying|wearing|with|and|beside|near|"
    r"next\s+to|on\s+top\s+of|in\s+front\s+of)\s+"
    r"(?:his\s+|her\s+|their\s+|its\s+|a\s+|an\s+|the\s+)?",
    re.IGNORECASE,
)
_LEAD_ARTICLE = re.compile(r"^(?:a|an|the)\s+", re.IGNORECASE)

# canned enhancement fragments for the worked example concept
_CANNED_DETAILS = {
    "techno samurai warrior": [
        "sleek metallic armor",
        "glowing neon blue circuits",
        "retractable energy katana",
        "cybernetic enhancements",
        "black visor helmet",
        "steel-toed combat boots",
        "metallic plate gauntlets",
        "reinforced synthetic leather waist armor",
    ],
}

_MOCK_ADJECTIVES = [
    "weathered", "iridescent", "angular", "polished", "faded", "luminous",
    "jagged", "woven", "matte", "crystalline", "rust-streaked", "gilded",
]
_MOCK_NOUNS = [
    "plating", "filigree", "visor", "harness", "lattice", "trim",
    "undercoat", "canopy", "rigging", "inlay", "tread", "mantle",
]


def _mock_decompose(prompt_text: str) -> str:
    subjects = [s.strip() for s in _CONNECTORS.split(prompt_text) if s.strip()]
    subjects = [_LEAD_ARTICLE.sub("", s).strip() for s in subjects]
    subjects = [s for s in subjects if s] or [prompt_text.strip()]
    payload = {
        "main": {"name": subjects[0], "styles": [], "details": []},
        "support": [
            {"name": s, "styles": [], "details": []} for s in subjects[1:]
        ],
        "image": {"styles": [], "details": []},
    }
    import json

    return json.dumps(payload)

_N_DETAILS = re.compile(r"list of (\d+) extremely specific details")
_CONCEPT_LINE = re.compile(r"Concept:\s*(.+)\s*$")


def _mock_details(seed: str, prompt: str) -> str:
    m = _N_DETAILS.search(prompt)
    n = int(m.group(1)) if m else 5
    cm = _CONCEPT_LINE.search(prompt.strip())
    concept = cm.group(1).strip() if cm else "concept"
    canned = _CANNED_DETAILS.get(concept.lower())
    if canned:
        return ", ".join(canned[:n] if n <= len(canned) else canned)
    frags = []
    for i in range(n):
        d = int(_digest(seed, concept, str(i)), 16)
        frags.append(
            f"{_MOCK_ADJECTIVES[d % len(_MOCK_ADJECTIVES)]} "
            f"{_MOCK_NOUNS[(d // 13) % len(_MOCK_NOUNS)]} {i + 1}"
        )
    return ", ".join(frags)


_DECOMPOSE_MARKER = "keys main, support, image"
_DETAIL_MARKER = "comma separated list"
_PROMPT_LINE = re.compile(r"Prompt:\s*(.+)\s*$")


def mock_complete(seed: str, prompt: str) -> str:
    """Pure function of (seed, prompt). Understands the engine's own templates."""
    if _DECOMPOSE_MARKER in prompt:
        m = _PROMPT_LINE.search(prompt.strip())
        return _mock_decompose(m.group(1) if m else prompt)
    if _DETAIL_MARKER in prompt:
        return _mock_details(seed, prompt)
    return f"mock-reply-{_digest(seed, prompt)[:16]}"


def mock_embed_one(seed: str, text: str, dim: int = MOCK_EMBED_DIM) -> EmbeddingVector:
    """Feature-hashing bag of words: texts sharing words get similar vectors."""
    acc = [0.0] * dim
    tokens = text.lower().split() or [""]
    for tok in tokens:
        d = int(_digest(seed, tok), 16)
        idx = d % dim
        sign = 1.0 if (d >> 8) % 2 == 0 else -1.0
        acc[idx] += sign
    norm = sum(v * v for v in acc) ** 0.5
    if norm > 0:
        acc = [v / norm for v in acc]
    return EmbeddingVector.of(acc)


# --- HTTP provider (OpenAI-compatible) ---------------------------------------

def _auth_headers(cfg: ProviderConfig) -> dict:
    key = os.environ.get(cfg.api_key_ref, "")
    return {"Authorization": f"Bearer {key}"} if key else {}


def _post_with_retries(cfg: ProviderConfig, path: str, body: dict,
                       client: httpx.Client | None = None) -> dict:
    url = cfg.endpoint.rstrip("/") + path
    owned = client is None
    client = client or httpx.Client(timeout=cfg.timeout)
    try:
        last_err: Exception | None = None
        for attempt in range(cfg.max_retries + 1):
            try:
                resp = client.post(url, json=body, headers=_auth_headers(cfg),
                                   timeout=cfg.timeout)
                if resp.status_code >= 500:
                    last_err = ProviderError(f"{url} -> {resp.status_code}")
                    if attempt < cfg.max_retries:
                        time.sleep(min(0.05 * (attempt + 1), 0.5))
                    continue
                if resp.status_code >= 400:
                    raise ProviderError(f"{url} -> {resp.status_code}: {resp.text[:200]}")
                return resp.json()
            except (httpx.TimeoutException, httpx.TransportError) as exc:
                last_err = exc
                if attempt < cfg.max_retries:
                    time.sleep(min(0.05 * (attempt + 1), 0.5))
        raise ProviderError(f"provider failed after {cfg.max_retries + 1} attempts: {last_err}")
    finally:
        if owned:
            client.close()


# --- public operations -------------------------------------------------------

def complete(cfg: ProviderConfig, prompt: str, ledger: TokenLedger,
             tokenizer=None, client: httpx.Client | None = None) -> str:
    """Chat completion. Budget is enforced pre-dispatch on projected prompt tokens."""
    prompt_tokens = count_tokens(prompt, tokenizer)
    ledger.check_can_spend(prompt_tokens)
    if cfg.is_mock:
        text = mock_complete(cfg.mock_seed, prompt)
    else:
        data = _post_with_retries(
            cfg, "/chat/completions",
            {"model": cfg.model_id,
             "messages": [{"role": "user", "content": prompt}]},
            client=client,
        )
        try:
            text = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"malformed completion response: {exc}")
    ledger.charge_completion(prompt_tokens + count_tokens(text, tokenizer))
    return text


def embed(cfg: ProviderConfig, texts: list[str], ledger: TokenLedger,
          tokenizer=None, client: httpx.Client | None = None) -> list[EmbeddingVector]:
    """Embed a batch of texts; one vector per input, uniform dimension."""
    if not texts:
        raise ValueError("texts must be non-empty")
    total = sum(count_tokens(t, tokenizer) for t in texts)
    ledger.check_can_spend(total)
    if cfg.is_mock:
        vectors = [mock_embed_one(cfg.mock_seed, t) for t in texts]
    else:
        data = _post_with_retries(
            cfg, "/embeddings", {"model": cfg.model_id, "input": texts},
            client=client,
        )
        try:
            vectors = [EmbeddingVector.of(item["embedding"]) for item in data["data"]]
        except (KeyError, TypeError) as exc:
            raise ProviderError(f"malformed embedding response: {exc}")
    dims = {v.dimension for v in vectors}
    if len(dims) > 1:
        raise DimensionMismatch(f"provider returned ragged vectors: dims {sorted(dims)}")
    if len(vectors) != len(texts):
        raise ProviderError(
            f"provider returned {len(vectors)} vectors for {len(texts)} inputs"
        )
    ledger.charge_embedding(total)
    return vectors


_WINNER_LINE = re.compile(r"WINNER:\s*([AB])\b")

_JUDGE_TEMPLATE = (
    "You are comparing two sets of generated images on one criterion: {criterion}.\n"
    "Set A: {a}\nSet B: {b}\n"
    "Rate each set for that criterion, explain briefly, and finish with a final "
    "line of exactly 'WINNER: A' or 'WINNER: B'."
)


def _image_digest(images) -> str:
    h = hashlib.sha256()
    for img in images:
        payload = img if isinstance(img, (bytes, bytearray)) else getattr(img, "bytes", b"")
        h.update(hashlib.sha256(payload).digest())
    return h.hexdigest()


def judge_pair(cfg: ProviderConfig, images_a, images_b, criterion: str,
               ledger: TokenLedger, tokenizer=None,
               client: httpx.Client | None = None) -> JudgeVerdict:
    """Pairwise preference verdict for one criterion.

    The mock judge scores each set independently by hash, so swapping the
    presentation order flips the winner label; ties go to A.
    """
    if criterion not in CRITERIA:
        raise ValueError(f"unknown criterion {criterion!r}")
    if not images_a or not images_b:
        raise ValueError("both image sets must be non-empty")
    dig_a, dig_b = _image_digest(images_a), _image_digest(images_b)
    if cfg.is_mock:
        score_a = int(_digest(cfg.mock_seed, criterion, dig_a), 16)
        score_b = int(_digest(cfg.mock_seed, criterion, dig_b), 16)
        winner = "A" if score_a >= score_b else "B"
        return JudgeVerdict(criterion=criterion, winner=winner,
                            rationale=f"mock hash preference ({criterion})")
    prompt = _JUDGE_TEMPLATE.format(criterion=criterion, a=dig_a[:16], b=dig_b[:16])
    text = complete(cfg, prompt, ledger, tokenizer=tokenizer, client=client)
    matches = _WINNER_LINE.findall(text)
    if not matches:
        raise UnparseableVerdict(f"no WINNER line in judge response: {text[:200]!r}")
    return JudgeVerdict(criterion=criterion, winner=matches[-1], rationale=text)
