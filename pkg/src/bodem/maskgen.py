"""Mask-area generation.

Local masks come from recursive bisection of the masking area around a
target box: the area is cut in half horizontally while its height allows
it and vertically while its width allows it, and every cut is applied
again to the halves it produced until no new unique sub-area appears.
Global masks tile the whole image with a fixed-size grid so that every
pixel is covered exactly once.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from .geometry import BBox, Rect


@dataclass(frozen=True)
class MaskGenConfig:
    """Knobs for mask generation.

    margin is the expansion of the target box on every side, min_subarea
    the smallest span (per dimension) that is still divided in two, and
    global_cells the grid cell sizes used for whole-image masks.
    """

    margin: int = 5
    min_subarea: int = 20
    global_cells: tuple[int, ...] = (20, 50)

    def __post_init__(self):
        if self.margin < 0:
            raise ValueError("margin must be >= 0")
        if self.min_subarea < 2:
            raise ValueError("min_subarea must be >= 2")
        if any(c < 1 for c in self.global_cells):
            raise ValueError("global cell sizes must be >= 1")


@dataclass(frozen=True)
class MaskSpec:
    """One mask area of a generated set; index is dense within its set."""

    index: int
    kind: str  # "local" | "global"
    area: Rect
    global_cell: int | None = None

    def __post_init__(self):
        if self.kind not in ("local", "global"):
            raise ValueError(f"unknown mask kind {self.kind!r}")


def masking_area(box: BBox, dims: tuple[int, int], cfg: MaskGenConfig) -> Rect:
    """The box expanded by cfg.margin on all sides, clamped to the image."""
    width, height = dims
    return Rect(
        max(box.x1 - cfg.margin, 0),
        max(box.y1 - cfg.margin, 0),
        min(box.x2 + cfg.margin, width),
        min(box.y2 + cfg.margin, height),
    )


def _halves(r: Rect, min_subarea: int) -> list[Rect]:
    """Sub-areas one division step produces: a horizontal cut when the
    height allows it, then a vertical cut when the width allows it.

    The first half of an odd span gets floor(span / 2) pixels.
    """
    out = []
    if r.height >= min_subarea:
        mid = r.y1 + r.height // 2
        out.append(Rect(r.x1, r.y1, r.x2, mid))
        out.append(Rect(r.x1, mid, r.x2, r.y2))
    if r.width >= min_subarea:
        mid = r.x1 + r.width // 2
        out.append(Rect(r.x1, r.y1, mid, r.y2))
        out.append(Rect(mid, r.y1, r.x2, r.y2))
    return out


def local_mask_areas(
    box: BBox, dims: tuple[int, int], cfg: MaskGenConfig
) -> list[Rect]:
    """All unique sub-areas of the masking area around box, in the order
    they are first produced (breadth-first).

    The masking area itself is never emitted; only division results are.
    Returns an empty list when the area is too small to divide in either
    dimension.
    """
    ma = masking_area(box, dims, cfg)
    seen: set[Rect] = set()
    order: list[Rect] = []
    queue: deque[Rect] = deque()
    for child in _halves(ma, cfg.min_subarea):
        if child not in seen:
            seen.add(child)
            order.append(child)
            queue.append(child)
    while queue:
        r = queue.popleft()
        for child in _halves(r, cfg.min_subarea):
            if child not in seen:
                seen.add(child)
                order.append(child)
                queue.append(child)
    return order


def global_mask_areas(dims: tuple[int, int], cell: int) -> list[Rect]:
    """Row-major grid of cell x cell squares from the top-left corner;
    the last column and row are clipped to the image so the returned
    rectangles partition it exactly.
    """
    if cell < 1:
        raise ValueError("cell size must be >= 1")
    width, height = dims
    out = []
    for y in range(0, height, cell):
        for x in range(0, width, cell):
            out.append(Rect(x, y, min(x + cell, width), min(y + cell, height)))
    return out


def local_mask_specs(
    box: BBox, dims: tuple[int, int], cfg: MaskGenConfig
) -> list[MaskSpec]:
    areas = local_mask_areas(box, dims, cfg)
    return [MaskSpec(i, "local", a) for i, a in enumerate(areas)]


def global_mask_specs(dims: tuple[int, int], cell: int) -> list[MaskSpec]:
    areas = global_mask_areas(dims, cell)
    return [MaskSpec(i, "global", a, global_cell=cell) for i, a in enumerate(areas)]
