"""HTTP client for a generation backend.

Wire contract (JSON bodies, PNGs as base64 strings, every response echoes
the request id; errors carry a machine-readable ``code``):

  GET  /healthz
      -> {"status": "ok", "model_versions": {...}}
  POST /segment   {"request_id", "image", "prompt"}
      -> {"request_id", "masks": [b64 grayscale PNG, ...], "timing_ms"}
  POST /invert    {"request_id", "class_id", "cdp_pngs": [b64 RGBA PNG, ...],
                   "strength", "steps", "lr", "batch", "seed"}
      -> {"request_id", "handle", "timing_ms"}
  POST /edit      {"request_id", "cdp_png", "handle", "strength",
                   "guidance", "steps", "seed"}
      -> {"request_id", "cdp_png", "timing_ms"}

Strength semantics match the diffusion core: 0 returns the input PNG bytes
verbatim, and identical (request, seed) pairs return identical bytes.
"""

from __future__ import annotations

import base64
import uuid

import numpy as np
import requests

from .errors import BackendError
from .imagecore import decode_png, encode_png

DEFAULT_TIMEOUT_S = 120.0


def _b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def _unb64(text: str) -> bytes:
    return base64.b64decode(text.encode("ascii"))


class BackendClient:
    def __init__(self, base_url: str, timeout: float = DEFAULT_TIMEOUT_S,
                 session: requests.Session | None = None):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.session = session or requests.Session()

    def _post(self, path: str, payload: dict) -> dict:
        request_id = payload.setdefault("request_id", uuid.uuid4().hex)
        try:
            resp = self.session.post(self.base_url + path, json=payload,
                                     timeout=self.timeout)
        except requests.RequestException as exc:
            raise BackendError(f"backend unreachable: {exc}",
                               code="unreachable") from exc
        try:
            body = resp.json()
        except ValueError:
            raise BackendError(f"non-JSON response from {path} "
                               f"(HTTP {resp.status_code})", code="bad_response")
        if resp.status_code != 200:
            err = body.get("error", {})
            raise BackendError(err.get("message", f"HTTP {resp.status_code}"),
                               code=err.get("code", str(resp.status_code)))
        if body.get("request_id") != request_id:
            raise BackendError("response does not echo the request id",
                               code="bad_response")
        return body

    def healthz(self) -> dict:
        try:
            resp = self.session.get(self.base_url + "/healthz",
                                    timeout=self.timeout)
            resp.raise_for_status()
            return resp.json()
        except requests.RequestException as exc:
            raise BackendError(f"backend unreachable: {exc}",
                               code="unreachable") from exc

    def segment(self, image_png: bytes, prompt: str) -> list[np.ndarray]:
        """Soft masks at image resolution; may be empty for a blank image."""
        body = self._post("/segment", {"image": _b64(image_png),
                                       "prompt": prompt})
        return [decode_png(_unb64(m), "L") for m in body["masks"]]

    def invert(self, class_id: int, cdp_pngs: list[bytes], strength: float,
               steps: int = 400, lr: float = 1e-4, batch: int = 32,
               seed: int = 0) -> str:
        """Train (or mock) one class identifier; returns a reusable handle."""
        body = self._post("/invert", {
            "class_id": int(class_id),
            "cdp_pngs": [_b64(p) for p in cdp_pngs],
            "strength": float(strength), "steps": int(steps),
            "lr": float(lr), "batch": int(batch), "seed": int(seed),
        })
        return body["handle"]

    def edit_png(self, cdp_png: bytes, handle: str, strength: float,
                 guidance: float = 7.0, steps: int = 25, seed: int = 0) -> bytes:
        body = self._post("/edit", {
            "cdp_png": _b64(cdp_png), "handle": handle,
            "strength": float(strength), "guidance": float(guidance),
            "steps": int(steps), "seed": int(seed),
        })
        return _unb64(body["cdp_png"])

    def edit(self, sprite: np.ndarray, handle: str, strength: float,
             guidance: float = 7.0, steps: int = 25, seed: int = 0) -> np.ndarray:
        """Array-level wrapper around /edit; output dimensions must match."""
        out_png = self.edit_png(encode_png(sprite), handle, strength,
                                guidance=guidance, steps=steps, seed=seed)
        out = decode_png(out_png, "RGBA")
        if out.shape != sprite.shape:
            raise BackendError(
                f"edit changed dimensions: {sprite.shape} -> {out.shape}",
                code="bad_response")
        return out
