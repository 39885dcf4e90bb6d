"""Saliency estimation from cached inquiry results.

For every mask, the detections on the masked image are compared with the
explained box: the score is 0 when some new box still overlaps it at least
IOU-threshold, the reciprocal of the best IOU when the overlap fell below
the threshold, and the large penalty w+h when detection was suppressed
outright (or nothing overlaps at all, where the reciprocal is undefined).
Each mask's score is added to every saliency cell it covers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .geometry import BBox, DetectionSet, box_to_json, iou
from .inquiry import InquiryResult
from .maskgen import MaskSpec


@dataclass
class SaliencyMap:
    """Non-negative per-pixel importance, width x height, row-major."""

    values: np.ndarray  # (height, width) float64
    normalized: bool = False

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class ThresholdSchedule:
    """IOU-threshold sweep: base, base+step, ... capped at max."""

    base: float = 0.8
    step: float = 0.05
    max: float = 1.0

    def __post_init__(self):
        if not (0 < self.base <= self.max <= 1):
            raise ValueError("need 0 < base <= max <= 1")
        if self.step <= 0:
            raise ValueError("step must be > 0")

    def thresholds(self) -> list[float]:
        # steps are rounded to 10 decimals so 0.8 + k*0.05 stays on-grid
        out = []
        k = 0
        while True:
            t = round(self.base + k * self.step, 10)
            if t >= self.max:
                out.append(self.max)
                return out
            out.append(t)
            k += 1


def similarity(box: BBox, detections: DetectionSet) -> float:
    """Best IOU between the explained box and any new detection; 0 when
    there are none."""
    best = 0.0
    for candidate in detections:
        value = iou(box, candidate)
        if value > best:
            best = value
    return best


def difference(
    box: BBox, detections: DetectionSet, threshold: float, penalty: float
) -> float:
    """How much the masked detections diverge from the explained box.

    penalty is the image's width + height: it stands in both for a fully
    suppressed detection and for detections that do not overlap the box at
    all (where the IOU reciprocal is undefined). Similarity exactly at the
    threshold counts as similar, so a threshold of 1.0 still accepts exact
    re-detections.
    """
    sim = similarity(box, detections)
    if sim >= threshold:
        return 0.0
    if not detections or sim == 0.0:
        return penalty
    return 1.0 / sim


def estimate(
    box: BBox,
    masks: Sequence[MaskSpec],
    result: InquiryResult,
    dims: tuple[int, int],
    threshold: float,
) -> SaliencyMap:
    """Accumulate every mask's difference over the cells it covers.

    Masks are processed in the given order (local and global ones alike),
    which pins the floating-point accumulation order and makes the map
    bit-reproducible. The returned map is un-normalized.
    """
    width, height = dims
    penalty = float(width + height)
    values = np.zeros((height, width), dtype=np.float64)
    for spec in masks:
        detections = result.detections_for(spec)
        d = difference(box, detections, threshold, penalty)
        if d != 0.0:
            a = spec.area
            values[a.y1 : a.y2, a.x1 : a.x2] += d
    return SaliencyMap(values, normalized=False)


def normalize(sm: SaliencyMap) -> SaliencyMap:
    """Scale to [0, 1] by the maximum value; an all-zero map stays zero."""
    if sm.normalized:
        raise ValueError("saliency map is already normalized")
    peak = float(sm.values.max()) if sm.values.size else 0.0
    if peak > 0.0:
        values = sm.values / peak
    else:
        values = sm.values.copy()
    return SaliencyMap(values, normalized=True)


def estimate_dynamic(
    box: BBox,
    masks: Sequence[MaskSpec],
    result: InquiryResult,
    dims: tuple[int, int],
    schedule: ThresholdSchedule = ThresholdSchedule(),
) -> tuple[float, SaliencyMap]:
    """Raise the threshold along the schedule until the map is not
    identically zero; detections are already cached, so no re-probing
    happens. Returns (max, zero map) when even the ceiling shows nothing.
    """
    sm = None
    t = schedule.max
    for t in schedule.thresholds():
        sm = estimate(box, masks, result, dims, t)
        if np.any(sm.values):
            return t, sm
    assert sm is not None
    return t, sm


def write_matrix(sm: SaliencyMap, path: str | Path) -> None:
    """Text matrix, one image row per line, comma-separated shortest
    round-trip decimals."""
    with open(path, "w", encoding="ascii") as fh:
        for row in sm.values:
            fh.write(",".join(repr(v) for v in row.tolist()))
            fh.write("\n")


def read_matrix(path: str | Path, normalized: bool = True) -> SaliencyMap:
    rows = []
    with open(path, "r", encoding="ascii") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append([float(v) for v in line.split(",")])
    return SaliencyMap(np.array(rows, dtype=np.float64), normalized=normalized)


def write_sidecar(
    box: BBox, threshold_used: float, normalized: bool, path: str | Path
) -> None:
    record = {
        "box": box_to_json(box),
        "threshold_used": threshold_used,
        "normalized": normalized,
    }
    with open(path, "w", encoding="ascii") as fh:
        json.dump(record, fh, indent=2)
        fh.write("\n")
