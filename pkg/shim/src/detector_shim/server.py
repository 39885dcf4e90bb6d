"""HTTP detection service.

Wire contract:
    GET  /health  -> 200 "ok"
    POST /detect  -> request body: PNG bytes (Content-Type: image/png)
                     response: {"boxes": [{"x1","y1","x2","y2","label"?,"score"?}]}
                     400 with a JSON error body for undecodable images,
                     500 with a JSON error body when inference fails.

Boxes are returned as integers in the submitted image's pixel grid, even
when the model runs at its own internal resolution. Requests are
stateless; one lock serializes models that are not thread-safe.
"""

from __future__ import annotations

import io
import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
from PIL import Image as PILImage
from PIL import UnidentifiedImageError

from .models import ModelWrapper

log = logging.getLogger(__name__)

_RESAMPLE = {
    "nearest": PILImage.Resampling.NEAREST,
    "bilinear": PILImage.Resampling.BILINEAR,
}


def _decode_request(body: bytes) -> np.ndarray:
    with PILImage.open(io.BytesIO(body)) as im:
        if im.mode == "L":
            im = im.convert("RGB")
        if im.mode != "RGB":
            raise UnidentifiedImageError(f"unsupported image mode {im.mode}")
        return np.asarray(im, dtype=np.uint8)


def run_model(wrapper: ModelWrapper, pixels: np.ndarray) -> list[dict]:
    """Predict on one image and map the detections back to its pixel grid."""
    orig_h, orig_w = pixels.shape[:2]
    if wrapper.input_size is not None:
        in_w, in_h = wrapper.input_size
        resized = PILImage.fromarray(pixels, mode="RGB").resize(
            (in_w, in_h), resample=_RESAMPLE[wrapper.resample]
        )
        model_pixels = np.asarray(resized, dtype=np.uint8)
        sx = orig_w / in_w
        sy = orig_h / in_h
    else:
        model_pixels = pixels
        sx = sy = 1.0

    boxes = []
    for x1, y1, x2, y2, label, score in wrapper.predict(model_pixels):
        if score is not None and score < wrapper.confidence:
            continue
        ix1 = max(0, min(round(x1 * sx), orig_w))
        iy1 = max(0, min(round(y1 * sy), orig_h))
        ix2 = max(0, min(round(x2 * sx), orig_w))
        iy2 = max(0, min(round(y2 * sy), orig_h))
        if ix1 >= ix2 or iy1 >= iy2:
            continue
        entry: dict = {"x1": ix1, "y1": iy1, "x2": ix2, "y2": iy2}
        if label is not None:
            entry["label"] = label
        if score is not None:
            entry["score"] = score
        boxes.append(entry)
    return boxes


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):
        log.debug("%s " + fmt, self.client_address[0], *args)

    def _respond(self, status: int, body: bytes, content_type: str) -> None:
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _respond_json(self, status: int, payload: dict) -> None:
        self._respond(status, json.dumps(payload).encode("utf-8"), "application/json")

    def do_GET(self):
        if self.path == "/health":
            self._respond(200, b"ok", "text/plain")
        else:
            self._respond_json(404, {"error": "not found"})

    def do_POST(self):
        if self.path != "/detect":
            self._respond_json(404, {"error": "not found"})
            return
        length = int(self.headers.get("Content-Length", 0))
        body = self.rfile.read(length)
        try:
            pixels = _decode_request(body)
        except (UnidentifiedImageError, OSError, ValueError) as exc:
            self._respond_json(400, {"error": f"cannot decode image: {exc}"})
            return
        server: DetectorShimServer = self.server  # type: ignore[assignment]
        try:
            if server.model_lock is not None:
                with server.model_lock:
                    boxes = run_model(server.wrapper, pixels)
            else:
                boxes = run_model(server.wrapper, pixels)
        except Exception as exc:  # inference failure maps to 500, not a crash
            log.exception("inference failed")
            self._respond_json(500, {"error": f"inference failed: {exc}"})
            return
        self._respond_json(200, {"boxes": boxes})


class DetectorShimServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, wrapper: ModelWrapper, host: str = "127.0.0.1", port: int = 0):
        super().__init__((host, port), _Handler)
        self.wrapper = wrapper
        self.model_lock = None if wrapper.thread_safe else threading.Lock()

    @property
    def url(self) -> str:
        return f"http://{self.server_address[0]}:{self.server_address[1]}"


def make_server(
    wrapper: ModelWrapper, host: str = "127.0.0.1", port: int = 0
) -> DetectorShimServer:
    """Bound but not yet serving; call serve_forever (a thread is fine)."""
    return DetectorShimServer(wrapper, host, port)


def serve(wrapper: ModelWrapper, port: int, host: str = "0.0.0.0") -> None:
    """Serve until interrupted."""
    server = make_server(wrapper, host, port)
    log.info("serving on %s", server.url)
    try:
        server.serve_forever()
    finally:
        server.server_close()
