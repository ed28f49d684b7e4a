"""HTTP surface of the generation backend.

Wire format mirrors the core client's contract: JSON bodies, base64 PNGs,
every response echoes the request id, and errors carry a machine-readable
``code``.  Endpoints:

  GET    /healthz                 service + model versions
  POST   /segment                 prompt-guided soft masks
  POST   /invert                  learn one class identifier, returns a handle
  POST   /edit                    strength-truncated RGBA edit
  GET    /identifier/{handle}     inspect a stored identifier
  DELETE /identifier/{handle}     drop a stored identifier

The identifier store is the only state.  Edits run under a bounded
semaphore, so concurrent requests with distinct seeds stay independent
while the server never oversubscribes itself.
"""

from __future__ import annotations

import base64
import logging
import threading
import time
import uuid

import numpy as np
from fastapi import FastAPI
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from deda.errors import DivergedError
from deda.imagecore import decode_png, encode_png

from .service import MODEL_VERSIONS, Editor, Segmenter
from .store import IdentifierStore

log = logging.getLogger("genbackend")

MAX_CONCURRENT_EDITS = 4


class SegmentRequest(BaseModel):
    request_id: str = Field(default_factory=lambda: uuid.uuid4().hex)
    image: str
    prompt: str


class InvertRequest(BaseModel):
    request_id: str = Field(default_factory=lambda: uuid.uuid4().hex)
    class_id: int
    cdp_pngs: list[str]
    strength: float = 0.4
    steps: int = 400
    lr: float = 1e-4
    batch: int = 32
    seed: int = 0


class EditRequest(BaseModel):
    request_id: str = Field(default_factory=lambda: uuid.uuid4().hex)
    cdp_png: str
    handle: str
    strength: float = 0.4
    guidance: float = 7.0
    steps: int = 25
    seed: int = 0


def _error(request_id: str, status: int, code: str, message: str,
           **extra) -> JSONResponse:
    body = {"request_id": request_id,
            "error": {"code": code, "message": message, **extra}}
    return JSONResponse(status_code=status, content=body)


def create_app(fixture_mask: np.ndarray | None = None,
               model_available: bool = True) -> FastAPI:
    app = FastAPI(title="deda generation backend")
    segmenter = Segmenter(fixture_mask=fixture_mask)
    editor = Editor()
    store = IdentifierStore()
    edit_gate = threading.BoundedSemaphore(MAX_CONCURRENT_EDITS)

    @app.get("/healthz")
    def healthz():
        return {"status": "ok" if model_available else "degraded",
                "model_versions": MODEL_VERSIONS}

    @app.post("/segment")
    def segment(req: SegmentRequest):
        if not model_available:
            return _error(req.request_id, 503, "model_unavailable",
                          "segmentation model not loaded")
        if not req.prompt.strip():
            return _error(req.request_id, 422, "undecodable", "empty prompt")
        start = time.monotonic()
        try:
            image = decode_png(base64.b64decode(req.image), "RGB")
        except Exception:
            return _error(req.request_id, 422, "undecodable",
                          "image is not a decodable PNG")
        try:
            masks = segmenter.segment(image, req.prompt)
        except ValueError as exc:
            return _error(req.request_id, 422, "undecodable", str(exc))
        return {"request_id": req.request_id,
                "masks": [base64.b64encode(encode_png(m)).decode()
                          for m in masks],
                "timing_ms": (time.monotonic() - start) * 1e3}

    @app.post("/invert")
    def invert(req: InvertRequest):
        if not model_available:
            return _error(req.request_id, 503, "model_unavailable",
                          "diffusion model not loaded")
        start = time.monotonic()
        try:
            sprites = [decode_png(base64.b64decode(p), "RGBA")
                       for p in req.cdp_pngs]
        except Exception:
            return _error(req.request_id, 422, "undecodable",
                          "cdp_pngs must be decodable RGBA PNGs")
        if not sprites:
            return _error(req.request_id, 422, "undecodable",
                          "need at least one cutout")
        if not (0.0 < req.strength <= 1.0 and req.steps >= 0):
            return _error(req.request_id, 422, "undecodable",
                          "bad strength or steps")
        try:
            result = editor.invert(req.class_id, sprites, req.strength,
                                   req.steps, req.lr, req.batch, req.seed)
        except DivergedError as exc:
            return _error(req.request_id, 500, "training_divergence",
                          str(exc), loss_trace=list(exc.trace))
        item = store.put(req.class_id, result.embedding, result.loss_trace)
        return {"request_id": req.request_id, "handle": item.handle,
                "timing_ms": (time.monotonic() - start) * 1e3}

    @app.post("/edit")
    def edit(req: EditRequest):
        if not model_available:
            return _error(req.request_id, 503, "model_unavailable",
                          "diffusion model not loaded")
        start = time.monotonic()
        item = store.get(req.handle)
        if item is None:
            return _error(req.request_id, 404, "unknown_handle", req.handle)
        try:
            png = base64.b64decode(req.cdp_png)
            sprite = decode_png(png, "RGBA")
        except Exception:
            return _error(req.request_id, 422, "undecodable",
                          "cdp_png is not a decodable RGBA PNG")
        if not 0.0 <= req.strength <= 1.0:
            return _error(req.request_id, 422, "undecodable",
                          "strength outside [0, 1]")
        if req.strength == 0.0:
            out_b64 = base64.b64encode(png).decode()   # byte-identical
        else:
            try:
                with edit_gate:
                    edited = editor.edit(sprite, item.class_id, item.embedding,
                                         req.strength, req.seed)
            except Exception as exc:   # keep generation failures non-fatal
                log.exception("edit failed")
                return _error(req.request_id, 500, "generation_failure",
                              str(exc))
            if edited.shape != sprite.shape:
                return _error(req.request_id, 500, "generation_failure",
                              "editor changed dimensions")
            out_b64 = base64.b64encode(encode_png(edited)).decode()
        return {"request_id": req.request_id, "cdp_png": out_b64,
                "timing_ms": (time.monotonic() - start) * 1e3}

    @app.get("/identifier/{handle}")
    def get_identifier(handle: str):
        item = store.get(handle)
        if item is None:
            return _error(uuid.uuid4().hex, 404, "unknown_handle", handle)
        return {"handle": item.handle, "class_id": item.class_id,
                "embedding": item.embedding.tolist(),
                "loss_trace_tail": list(item.loss_trace[-5:])}

    @app.delete("/identifier/{handle}")
    def delete_identifier(handle: str):
        if not store.delete(handle):
            return _error(uuid.uuid4().hex, 404, "unknown_handle", handle)
        return {"handle": handle, "deleted": True}

    return app
