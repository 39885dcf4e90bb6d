"""Probing layer between the explainer and the detector.

Adapters normalize three ways of reaching a detector (in-process synthetic,
HTTP endpoint, subprocess over stdin/stdout) behind one raw_detect call.
run_inquiry probes every mask exactly once, materializing masked images
only inside the workers, and an InquiryCache shares baseline and
global-mask detections across all boxes explained in the same image.
"""

from __future__ import annotations

import base64
import json
import logging
import os
import select
import shlex
import subprocess
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import requests

from .geometry import BBox, DetectionSet, clamp_box
from .image import Image, apply_mask, encode_png
from .maskgen import MaskSpec

log = logging.getLogger(__name__)

# Raw detector output before clamping: (x1, y1, x2, y2, label, score)
RawBox = tuple[int, int, int, int, "str | None", "float | None"]


class DetectorError(Exception):
    """Base class for everything a detector probe can fail with."""

    def __init__(self, message: str, mask: MaskSpec | None = None):
        super().__init__(message)
        self.mask = mask


class TransportError(DetectorError):
    """The detector could not be reached or answered with a failure status."""

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class MalformedResponseError(DetectorError):
    """The detector answered, but not in the agreed format."""


class DetectTimeoutError(DetectorError):
    """The detector did not answer within the time budget."""


def _parse_coord(value) -> int:
    if isinstance(value, bool):
        raise MalformedResponseError(f"coordinate {value!r} is not an integer")
    if isinstance(value, int):
        return value
    if isinstance(value, float) and value.is_integer():
        return int(value)
    raise MalformedResponseError(f"coordinate {value!r} is not an integer")


def parse_boxes_payload(payload) -> list[RawBox]:
    """Validate a {"boxes": [...]} JSON payload into raw box tuples."""
    if not isinstance(payload, dict) or "boxes" not in payload:
        raise MalformedResponseError("response is missing the 'boxes' field")
    boxes = payload["boxes"]
    if not isinstance(boxes, list):
        raise MalformedResponseError("'boxes' is not a list")
    out: list[RawBox] = []
    for entry in boxes:
        if not isinstance(entry, dict):
            raise MalformedResponseError(f"box entry {entry!r} is not an object")
        try:
            coords = tuple(_parse_coord(entry[k]) for k in ("x1", "y1", "x2", "y2"))
        except KeyError as exc:
            raise MalformedResponseError(f"box entry missing field {exc}") from exc
        label = entry.get("label")
        if label is not None and not isinstance(label, str):
            raise MalformedResponseError(f"label {label!r} is not a string")
        score = entry.get("score")
        if score is not None:
            if isinstance(score, bool) or not isinstance(score, (int, float)):
                raise MalformedResponseError(f"score {score!r} is not a number")
            score = float(score)
        out.append((*coords, label, score))
    return out


class DetectorAdapter:
    """One detector behind a uniform probe call.

    single_flight adapters cannot take concurrent requests; run_inquiry
    serializes probing for them regardless of the configured parallelism.
    """

    single_flight = False

    def raw_detect(self, img: Image) -> list[RawBox]:
        raise NotImplementedError

    def close(self) -> None:
        pass


class SyntheticAdapter(DetectorAdapter):
    """In-process reference detector, plain or strict mode."""

    def __init__(self, mode: str = "plain"):
        from .synthetic import synthetic_detect  # local import keeps startup light

        if mode not in ("plain", "strict"):
            raise ValueError(f"unknown synthetic mode {mode!r}")
        self.mode = mode
        self._detect = synthetic_detect

    def raw_detect(self, img: Image) -> list[RawBox]:
        return [
            (b.x1, b.y1, b.x2, b.y2, b.label, b.score)
            for b in self._detect(img, self.mode)
        ]


class RemoteAdapter(DetectorAdapter):
    """HTTP detector: POST {base}/detect with PNG bytes, JSON boxes back.

    Transport failures and timeouts are retried up to the retry budget with
    a fixed backoff; client errors (4xx) are permanent and not retried.
    """

    def __init__(
        self,
        base_url: str,
        timeout: float = 30.0,
        retries: int = 2,
        backoff: float = 0.5,
    ):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff

    def health(self) -> bool:
        try:
            resp = requests.get(f"{self.base_url}/health", timeout=self.timeout)
        except requests.RequestException:
            return False
        return resp.status_code == 200 and resp.text.strip() == "ok"

    def raw_detect(self, img: Image) -> list[RawBox]:
        png = encode_png(img)
        failures: list[str] = []
        for attempt in range(self.retries + 1):
            if attempt:
                time.sleep(self.backoff)
            try:
                resp = requests.post(
                    f"{self.base_url}/detect",
                    data=png,
                    headers={"Content-Type": "image/png"},
                    timeout=self.timeout,
                )
            except requests.Timeout:
                failures.append("timeout")
                continue
            except requests.RequestException as exc:
                failures.append(str(exc))
                continue
            if 400 <= resp.status_code < 500:
                raise TransportError(
                    f"detector rejected the request with HTTP {resp.status_code}",
                    status=resp.status_code,
                )
            if resp.status_code != 200:
                failures.append(f"HTTP {resp.status_code}")
                continue
            if attempt:
                log.warning(
                    "detector answered only after %d failed attempt(s): %s",
                    attempt,
                    "; ".join(failures),
                )
            try:
                payload = resp.json()
            except ValueError as exc:
                raise MalformedResponseError(
                    f"detector response is not JSON: {exc}"
                ) from exc
            return parse_boxes_payload(payload)
        detail = "; ".join(failures)
        if all(f == "timeout" for f in failures):
            raise DetectTimeoutError(
                f"detector timed out on all {self.retries + 1} attempts"
            )
        last = failures[-1]
        status = None
        if last.startswith("HTTP "):
            status = int(last.split()[1])
        raise TransportError(f"detector unreachable after retries: {detail}", status=status)


class SubprocessAdapter(DetectorAdapter):
    """Detector as a child process speaking newline-delimited JSON.

    Requests {"id": n, "image_png_base64": ...} go to stdin, responses
    {"id": n, "boxes": [...]} come back on stdout, one object per line.
    The stream carries one request at a time, so this adapter declares
    single_flight and the runner serializes access.
    """

    single_flight = True

    def __init__(self, cmd: str | list[str], timeout: float = 30.0):
        self.cmd = shlex.split(cmd) if isinstance(cmd, str) else list(cmd)
        self.timeout = timeout
        self._proc: subprocess.Popen | None = None
        self._lock = threading.Lock()
        self._next_id = 0
        self._rbuf = bytearray()

    def start(self) -> None:
        """Spawn the detector process; raises TransportError if it cannot start."""
        with self._lock:
            self._ensure_started()

    def _ensure_started(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            return
        try:
            self._proc = subprocess.Popen(
                self.cmd,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                bufsize=0,
            )
        except OSError as exc:
            raise TransportError(f"cannot start detector process: {exc}") from exc
        self._rbuf = bytearray()

    def _read_line(self, deadline: float) -> bytes:
        assert self._proc is not None and self._proc.stdout is not None
        fd = self._proc.stdout.fileno()
        while b"\n" not in self._rbuf:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise DetectTimeoutError(
                    f"detector process did not answer within {self.timeout}s"
                )
            ready, _, _ = select.select([fd], [], [], remaining)
            if not ready:
                continue
            chunk = os.read(fd, 65536)
            if not chunk:
                raise TransportError("detector process closed its output")
            self._rbuf.extend(chunk)
        line, _, rest = bytes(self._rbuf).partition(b"\n")
        self._rbuf = bytearray(rest)
        return line

    def raw_detect(self, img: Image) -> list[RawBox]:
        png64 = base64.b64encode(encode_png(img)).decode("ascii")
        with self._lock:
            self._ensure_started()
            assert self._proc is not None and self._proc.stdin is not None
            rid = self._next_id
            self._next_id += 1
            request = json.dumps({"id": rid, "image_png_base64": png64}) + "\n"
            try:
                self._proc.stdin.write(request.encode("ascii"))
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError) as exc:
                raise TransportError(f"detector process pipe broke: {exc}") from exc
            line = self._read_line(time.monotonic() + self.timeout)
        try:
            payload = json.loads(line)
        except ValueError as exc:
            raise MalformedResponseError(
                f"detector process wrote invalid JSON: {exc}"
            ) from exc
        if not isinstance(payload, dict) or payload.get("id") != rid:
            raise MalformedResponseError(
                f"detector response id mismatch (expected {rid})"
            )
        return parse_boxes_payload(payload)

    def close(self) -> None:
        with self._lock:
            if self._proc is not None and self._proc.poll() is None:
                self._proc.terminate()
                try:
                    self._proc.wait(timeout=5)
                except subprocess.TimeoutExpired:
                    self._proc.kill()
                    self._proc.wait()
            self._proc = None


def detect(adapter: DetectorAdapter, img: Image) -> DetectionSet:
    """Probe the detector once; clamp boxes to the image and drop the
    degenerate ones with a warning."""
    boxes: DetectionSet = []
    for x1, y1, x2, y2, label, score in adapter.raw_detect(img):
        clamped = clamp_box(x1, y1, x2, y2, img.width, img.height, label, score)
        if clamped is None:
            log.warning(
                "dropping degenerate detector box (%d,%d,%d,%d)", x1, y1, x2, y2
            )
            continue
        boxes.append(clamped)
    return boxes


@dataclass
class InquiryResult:
    """Cached detections for one explained box: the baseline plus one
    DetectionSet per mask, keyed by mask index (global masks additionally
    by cell size). query_count is the number of images actually sent while
    building this result; entries served from a shared cache are not
    re-counted.
    """

    baseline: DetectionSet
    local: dict[int, DetectionSet]
    global_by_cell: dict[int, dict[int, DetectionSet]]
    query_count: int

    def detections_for(self, spec: MaskSpec) -> DetectionSet:
        try:
            if spec.kind == "local":
                return self.local[spec.index]
            return self.global_by_cell[spec.global_cell][spec.index]
        except KeyError:
            raise LookupError(
                f"no inquiry result for {spec.kind} mask {spec.index}"
                + (f" (cell {spec.global_cell})" if spec.kind == "global" else "")
            ) from None


@dataclass
class InquiryCache:
    """Per-image cache shared across all explained boxes of that image.

    Detections depend only on the masked image, never on the box being
    explained, so the baseline and every global-mask probe are issued at
    most once per image.
    """

    baseline: DetectionSet | None = None
    global_results: dict[int, dict[int, DetectionSet]] = field(default_factory=dict)
    total_queries: int = 0

    def ensure_baseline(self, adapter: DetectorAdapter, img: Image) -> DetectionSet:
        if self.baseline is None:
            self.baseline = detect(adapter, img)
            self.total_queries += 1
        return self.baseline


def _attach_mask(exc: DetectorError, spec: MaskSpec) -> DetectorError:
    exc.mask = spec
    suffix = f" [while probing {spec.kind} mask {spec.index}]"
    exc.args = ((exc.args[0] if exc.args else "") + suffix,) + exc.args[1:]
    return exc


def run_inquiry(
    adapter: DetectorAdapter,
    img: Image,
    local: list[MaskSpec],
    global_: list[MaskSpec],
    parallelism: int = 1,
    cache: InquiryCache | None = None,
) -> InquiryResult:
    """Probe the detector for every mask exactly once.

    Masked images are built inside the probe tasks, so at most
    `parallelism` of them exist at a time. Results are keyed by mask
    index; completion order never changes the outcome.
    """
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    if cache is None:
        cache = InquiryCache()
    queries_before = cache.total_queries
    cache.ensure_baseline(adapter, img)

    todo: list[MaskSpec] = list(local)
    for spec in global_:
        have = cache.global_results.get(spec.global_cell, {})
        if spec.index not in have:
            todo.append(spec)

    def probe(spec: MaskSpec) -> tuple[MaskSpec, DetectionSet]:
        masked = apply_mask(img, spec.area)
        try:
            return spec, detect(adapter, masked)
        except DetectorError as exc:
            raise _attach_mask(exc, spec)

    results: dict[tuple, DetectionSet] = {}
    effective = 1 if adapter.single_flight else parallelism
    if effective == 1 or len(todo) <= 1:
        for spec in todo:
            spec, dets = probe(spec)
            results[(spec.kind, spec.global_cell, spec.index)] = dets
    else:
        with ThreadPoolExecutor(max_workers=effective) as pool:
            for spec, dets in pool.map(probe, todo):
                results[(spec.kind, spec.global_cell, spec.index)] = dets
    cache.total_queries += len(todo)

    local_map = {
        spec.index: results[("local", None, spec.index)] for spec in local
    }
    global_map: dict[int, dict[int, DetectionSet]] = {}
    for spec in global_:
        cell_cache = cache.global_results.setdefault(spec.global_cell, {})
        key = ("global", spec.global_cell, spec.index)
        if key in results:
            cell_cache[spec.index] = results[key]
        global_map.setdefault(spec.global_cell, {})[spec.index] = cell_cache[spec.index]

    assert cache.baseline is not None
    return InquiryResult(
        baseline=cache.baseline,
        local=local_map,
        global_by_cell=global_map,
        query_count=cache.total_queries - queries_before,
    )
