"""Minimal stdlib HTTP server implementing the generation-backend wire
contract, used to test the core's client and edit pipeline without any
external service."""

from __future__ import annotations

import base64
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from deda.diffusion import Identifier, build_schedule
from deda.editing import edit_sprite_toy, sprite_to_tensor
from deda.imagecore import decode_png, encode_png


def _b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def _unb64(text: str) -> bytes:
    return base64.b64decode(text.encode("ascii"))


class MockBackendServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, addr=("127.0.0.1", 0)):
        super().__init__(addr, MockBackendHandler)
        self.sched = build_schedule()
        self.identifiers: dict[str, tuple[int, np.ndarray]] = {}
        self.counter = 0
        self.fixture_mask: np.ndarray | None = None
        self.fail_edits_remaining = 0      # transient 500s for retry tests
        self.fail_edits_forever = False
        self.lock = threading.Lock()

    @property
    def url(self) -> str:
        return f"http://{self.server_address[0]}:{self.server_address[1]}"


class MockBackendHandler(BaseHTTPRequestHandler):

    def log_message(self, *args):
        pass

    def _reply(self, status: int, body: dict):
        data = json.dumps(body).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def do_GET(self):
        if self.path == "/healthz":
            self._reply(200, {"status": "ok",
                              "model_versions": {"segmenter": "mock-1",
                                                 "editor": "toy-1"}})
        else:
            self._reply(404, {"error": {"code": "not_found", "message": self.path}})

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        try:
            req = json.loads(self.rfile.read(length))
        except ValueError:
            self._reply(422, {"error": {"code": "undecodable",
                                        "message": "bad json"}})
            return
        rid = req.get("request_id", "")
        handler = {"/segment": self._segment, "/invert": self._invert,
                   "/edit": self._edit}.get(self.path)
        if handler is None:
            self._reply(404, {"request_id": rid,
                              "error": {"code": "not_found", "message": self.path}})
            return
        handler(rid, req)

    def _segment(self, rid, req):
        try:
            image = decode_png(_unb64(req["image"]), "RGB")
        except Exception:
            self._reply(422, {"request_id": rid,
                              "error": {"code": "undecodable",
                                        "message": "bad image"}})
            return
        srv: MockBackendServer = self.server
        if srv.fixture_mask is not None:
            masks = [srv.fixture_mask]
        else:
            # anything that differs from the top-left corner color is object
            corner = image[0, 0]
            diff = (image.astype(np.int32) - corner.astype(np.int32))
            mask = (np.abs(diff).sum(axis=2) > 30).astype(np.uint8) * 255
            masks = [] if mask.max() == 0 else [mask]
        self._reply(200, {"request_id": rid,
                          "masks": [_b64(encode_png(m)) for m in masks],
                          "timing_ms": 0.1})

    def _invert(self, rid, req):
        srv: MockBackendServer = self.server
        try:
            sprites = [decode_png(_unb64(p), "RGBA") for p in req["cdp_pngs"]]
        except Exception:
            self._reply(422, {"request_id": rid,
                              "error": {"code": "undecodable",
                                        "message": "bad cdp png"}})
            return
        if not sprites:
            self._reply(422, {"request_id": rid,
                              "error": {"code": "undecodable",
                                        "message": "need at least one cutout"}})
            return
        emb = np.mean([sprite_to_tensor(s).mean(axis=(0, 1)) for s in sprites],
                      axis=0)
        with srv.lock:
            srv.counter += 1
            handle = f"mock-{req['class_id']}-{srv.counter}"
            srv.identifiers[handle] = (int(req["class_id"]), emb)
        self._reply(200, {"request_id": rid, "handle": handle, "timing_ms": 0.1})

    def _edit(self, rid, req):
        srv: MockBackendServer = self.server
        with srv.lock:
            if srv.fail_edits_forever:
                self._reply(500, {"request_id": rid,
                                  "error": {"code": "generation_failure",
                                            "message": "injected"}})
                return
            if srv.fail_edits_remaining > 0:
                srv.fail_edits_remaining -= 1
                self._reply(500, {"request_id": rid,
                                  "error": {"code": "generation_failure",
                                            "message": "injected transient"}})
                return
            ident = srv.identifiers.get(req["handle"])
        if ident is None:
            self._reply(404, {"request_id": rid,
                              "error": {"code": "unknown_handle",
                                        "message": req["handle"]}})
            return
        png = _unb64(req["cdp_png"])
        if float(req["strength"]) == 0.0:
            self._reply(200, {"request_id": rid, "cdp_png": _b64(png),
                              "timing_ms": 0.1})
            return
        sprite = decode_png(png, "RGBA")
        edited = edit_sprite_toy(sprite, Identifier(ident[0], ident[1]),
                                 float(req["strength"]), int(req["seed"]),
                                 srv.sched)
        self._reply(200, {"request_id": rid, "cdp_png": _b64(encode_png(edited)),
                          "timing_ms": 0.1})


def start_mock_backend() -> MockBackendServer:
    server = MockBackendServer()
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server
