"""Rectangles, detector boxes and IOU on the half-open pixel grid.

Coordinates follow the convention [x1, x2) x [y1, y2): x grows right,
y grows down, and areas are exact integer products (x2 - x1) * (y2 - y1).
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Rect:
    """Axis-aligned half-open rectangle in integer pixel coordinates."""

    x1: int
    y1: int
    x2: int
    y2: int

    def __post_init__(self):
        if self.x1 >= self.x2 or self.y1 >= self.y2:
            raise ValueError(
                f"empty rectangle ({self.x1},{self.y1},{self.x2},{self.y2})"
            )

    @property
    def width(self) -> int:
        return self.x2 - self.x1

    @property
    def height(self) -> int:
        return self.y2 - self.y1

    @property
    def area(self) -> int:
        return self.width * self.height

    def contains(self, other: Rect) -> bool:
        return (
            self.x1 <= other.x1
            and other.x2 <= self.x2
            and self.y1 <= other.y1
            and other.y2 <= self.y2
        )

    def intersects(self, other: Rect) -> bool:
        return (
            self.x1 < other.x2
            and other.x1 < self.x2
            and self.y1 < other.y2
            and other.y1 < self.y2
        )

    def within_bounds(self, width: int, height: int) -> bool:
        """True when the rectangle lies inside a width x height image."""
        return 0 <= self.x1 and self.x2 <= width and 0 <= self.y1 and self.y2 <= height


@dataclass(frozen=True)
class BBox(Rect):
    """A detector box.

    label and score are carried for reporting only; no saliency value
    ever depends on them.
    """

    label: str | None = None
    score: float | None = None


# A detection result is an ordered list of boxes; empty means the detector
# found nothing in the image.
DetectionSet = list[BBox]


def iou(a: Rect, b: Rect) -> float:
    """Intersection over union of two boxes, 0.0 when they are disjoint."""
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def clamp_box(
    x1: int,
    y1: int,
    x2: int,
    y2: int,
    width: int,
    height: int,
    label: str | None = None,
    score: float | None = None,
) -> BBox | None:
    """Clamp raw detector coordinates to the image.

    Returns None when nothing is left after clamping (degenerate box).
    """
    cx1 = min(max(x1, 0), width)
    cy1 = min(max(y1, 0), height)
    cx2 = min(max(x2, 0), width)
    cy2 = min(max(y2, 0), height)
    if cx1 >= cx2 or cy1 >= cy2:
        return None
    return BBox(cx1, cy1, cx2, cy2, label=label, score=score)


def box_to_json(box: BBox) -> dict:
    """Wire/report representation of a box; optional fields only if set."""
    out: dict = {"x1": box.x1, "y1": box.y1, "x2": box.x2, "y2": box.y2}
    if box.label is not None:
        out["label"] = box.label
    if box.score is not None:
        out["score"] = box.score
    return out
