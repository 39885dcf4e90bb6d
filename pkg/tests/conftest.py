import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest

from bodem.geometry import Rect
from bodem.image import Image


def make_scene(width, height, rects, bg=(255, 255, 255), fg=(200, 30, 30)):
    """Solid rectangles on a uniform background; the synthetic detector
    sees exactly these rectangles."""
    arr = np.empty((height, width, 3), dtype=np.uint8)
    arr[:, :] = bg
    colors = fg if isinstance(fg, list) else [fg] * len(rects)
    for rect, color in zip(rects, colors):
        arr[rect.y1 : rect.y2, rect.x1 : rect.x2] = color
    return Image(arr)


class _Handler(BaseHTTPRequestHandler):
    def log_message(self, fmt, *args):
        pass

    def do_GET(self):
        if self.path == "/health" and self.server.healthy:
            body = b"ok"
            self.send_response(200)
            self.send_header("Content-Type", "text/plain")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)
        else:
            self.send_error(404)

    def do_POST(self):
        srv = self.server
        with srv.lock:
            srv.requests += 1
        length = int(self.headers.get("Content-Length", 0))
        self.rfile.read(length)
        if srv.delay:
            time.sleep(srv.delay)
        if srv.mode == "error500":
            body = json.dumps({"error": "inference failed"}).encode()
            self.send_response(500)
        elif srv.mode == "error400":
            body = json.dumps({"error": "bad image"}).encode()
            self.send_response(400)
        elif srv.mode == "garbage":
            body = b"this is not json"
            self.send_response(200)
        else:
            body = json.dumps({"boxes": srv.boxes}).encode()
            self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)


class ScriptedDetectorServer(ThreadingHTTPServer):
    """Local HTTP detector whose behavior tests can reconfigure."""

    daemon_threads = True

    def __init__(self):
        super().__init__(("127.0.0.1", 0), _Handler)
        self.boxes = []
        self.mode = "ok"
        self.delay = 0.0
        self.healthy = True
        self.requests = 0
        self.lock = threading.Lock()

    @property
    def url(self):
        return f"http://127.0.0.1:{self.server_address[1]}"


@pytest.fixture
def http_detector():
    server = ScriptedDetectorServer()
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield server
    finally:
        server.shutdown()
        server.server_close()
        thread.join(timeout=5)
