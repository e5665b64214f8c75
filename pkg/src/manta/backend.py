"""Image generation backend: webui-style HTTP client plus a deterministic stub.

The stub backend is a pure function of the workflow. Its feature vectors
stand in for vision-model features at desk scale: a per-workflow anchor
plus per-image noise whose spread grows linearly with cfg_scale, so batch
diversity is measurable (mean pairwise feature distance) and monotone in
CFG by construction.
"""

from __future__ import annotations

import base64
import hashlib
import io
import threading
from dataclasses import dataclass

import httpx
import numpy as np

from .errors import BackendUnavailable, ModelNotFound
from .workflow import GenerationWorkflow

STUB_FEATURE_DIM = 16
STUB_CFG_SPREAD = 0.05  # feature noise amplitude per unit of cfg_scale
DEFAULT_DENOISE = 0.5


@dataclass(frozen=True)
class GeneratedImage:
    bytes: bytes
    seed_used: int
    feature_vector: tuple[float, ...] | None = None

    def __post_init__(self):
        if not self.bytes:
            raise ValueError("image payload must be non-empty")


@dataclass(frozen=True)
class BackendConfig:
    base_url: str = ""
    mode: str = "stub"
    model_switch_timeout: float = 120.0

    def __post_init__(self):
        if self.mode not in ("http", "stub"):
            raise ValueError("mode must be 'http' or 'stub'")
        if self.model_switch_timeout <= 0:
            raise ValueError("model_switch_timeout must be positive")


def _hash_floats(n: int, *parts: str) -> np.ndarray:
    """n floats in [-1, 1), deterministic in the given parts."""
    out = np.empty(n, dtype=np.float64)
    i = 0
    counter = 0
    key = "\x00".join(parts)
    while i < n:
        h = hashlib.sha256(f"{key}\x00{counter}".encode()).digest()
        for j in range(0, 32, 4):
            if i >= n:
                break
            val = int.from_bytes(h[j:j + 4], "little")
            out[i] = val / 2**31 - 1.0
            i += 1
        counter += 1
    return out


def _workflow_key(w: GenerationWorkflow) -> str:
    return "\x01".join([
        w.positive_prompt, w.negative_prompt, w.checkpoint_id,
        ",".join(f"{a}:{wt:g}" for a, wt in w.adapters),
        f"{w.width}x{w.height}",
    ])


def stub_features(w: GenerationWorkflow, index: int) -> np.ndarray:
    key = _workflow_key(w)
    anchor = _hash_floats(STUB_FEATURE_DIM, "anchor", key)
    noise = _hash_floats(STUB_FEATURE_DIM, "noise", key, str(w.seed), str(index))
    return anchor + STUB_CFG_SPREAD * w.cfg_scale * noise


def _stub_payload(features: np.ndarray, seed_used: int) -> bytes:
    """Small deterministic PNG derived from the feature vector."""
    from PIL import Image

    digest = hashlib.sha256(features.tobytes() + str(seed_used).encode()).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
    pixels = rng.integers(0, 256, size=(64, 64, 3), dtype=np.uint8)
    buf = io.BytesIO()
    Image.fromarray(pixels, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


class GenerationBackend:
    """Client for txt2img/img2img generation; one in-flight request at a time."""

    def __init__(self, cfg: BackendConfig, client: httpx.Client | None = None):
        self.cfg = cfg
        self._client = client
        self._lock = threading.Lock()
        self._current_model: str | None = None

    # --- stub implementation -------------------------------------------------

    def _stub_txt2img(self, w: GenerationWorkflow) -> list[GeneratedImage]:
        images = []
        for i in range(w.batch_size):
            feats = stub_features(w, i)
            seed_used = w.seed + i
            images.append(GeneratedImage(
                bytes=_stub_payload(feats, seed_used),
                seed_used=seed_used,
                feature_vector=tuple(float(x) for x in feats),
            ))
        return images

    def _stub_img2img(self, image: GeneratedImage, w: GenerationWorkflow,
                      denoise: float) -> list[GeneratedImage]:
        parent = np.asarray(image.feature_vector or
                            _hash_floats(STUB_FEATURE_DIM, "payload",
                                         image.bytes.hex()))
        images = []
        for i in range(w.batch_size):
            fresh = stub_features(w, i)
            feats = (1.0 - denoise) * parent + denoise * fresh
            seed_used = w.seed + i
            images.append(GeneratedImage(
                bytes=_stub_payload(feats, seed_used),
                seed_used=seed_used,
                feature_vector=tuple(float(x) for x in feats),
            ))
        return images

    # --- http implementation -------------------------------------------------

    def _post(self, path: str, body: dict, timeout: float | None = None) -> dict:
        url = self.cfg.base_url.rstrip("/") + path
        client = self._client or httpx.Client()
        try:
            resp = client.post(url, json=body, timeout=timeout or 60.0)
        except (httpx.TransportError, httpx.TimeoutException) as exc:
            raise BackendUnavailable(f"{url}: {exc}")
        finally:
            if self._client is None:
                client.close()
        if resp.status_code == 404:
            raise ModelNotFound(f"{url} -> 404: {resp.text[:200]}")
        if resp.status_code >= 400:
            raise BackendUnavailable(f"{url} -> {resp.status_code}: {resp.text[:200]}")
        return resp.json()

    def _generation_body(self, w: GenerationWorkflow) -> dict:
        return {
            "prompt": w.positive_prompt,
            "negative_prompt": w.negative_prompt,
            "cfg_scale": w.cfg_scale,
            "seed": w.seed,
            "width": w.width,
            "height": w.height,
            "batch_size": w.batch_size,
        }

    def _decode_images(self, data: dict, seed: int) -> list[GeneratedImage]:
        images = data.get("images") or []
        if not images:
            raise BackendUnavailable("backend returned no images")
        return [
            GeneratedImage(bytes=base64.b64decode(b64), seed_used=seed + i)
            for i, b64 in enumerate(images)
        ]

    # --- public operations ---------------------------------------------------

    def set_checkpoint(self, checkpoint_id: str) -> None:
        """Switch the backend's active model; bookkeeping only in stub mode."""
        with self._lock:
            if self.cfg.mode == "stub":
                self._current_model = checkpoint_id
                return
            self._post("/sdapi/v1/options",
                       {"sd_model_checkpoint": checkpoint_id},
                       timeout=self.cfg.model_switch_timeout)
            self._current_model = checkpoint_id

    def txt2img(self, w: GenerationWorkflow) -> list[GeneratedImage]:
        with self._lock:
            if self.cfg.mode == "stub":
                return self._stub_txt2img(w)
        if self._current_model != w.checkpoint_id:
            self.set_checkpoint(w.checkpoint_id)
        with self._lock:
            data = self._post("/sdapi/v1/txt2img", self._generation_body(w))
            return self._decode_images(data, w.seed)

    def img2img(self, image: GeneratedImage, w: GenerationWorkflow,
                denoise: float = DEFAULT_DENOISE) -> list[GeneratedImage]:
        if not (0 <= denoise <= 1):
            raise ValueError("denoise must be in [0, 1]")
        with self._lock:
            if self.cfg.mode == "stub":
                return self._stub_img2img(image, w, denoise)
        if self._current_model != w.checkpoint_id:
            self.set_checkpoint(w.checkpoint_id)
        with self._lock:
            body = self._generation_body(w)
            body["init_images"] = [base64.b64encode(image.bytes).decode("ascii")]
            body["denoising_strength"] = denoise
            data = self._post("/sdapi/v1/img2img", body)
            return self._decode_images(data, w.seed)


def batch_diversity(images: list[GeneratedImage]) -> float:
    """Mean pairwise euclidean distance between stub feature vectors."""
    feats = [np.asarray(img.feature_vector) for img in images
             if img.feature_vector is not None]
    if len(feats) < 2:
        return 0.0
    dists = [
        float(np.linalg.norm(feats[i] - feats[j]))
        for i in range(len(feats)) for j in range(i + 1, len(feats))
    ]
    return float(np.mean(dists))
