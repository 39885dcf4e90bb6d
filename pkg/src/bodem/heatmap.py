"""Heatmap rendering: colorize a normalized saliency map and composite it
over the input image, with the explained box outlined in black.

Zero-saliency pixels stay fully transparent so unimportant regions show
the original image through the overlay.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import BBox
from .image import Image, write_image
from .saliency import SaliencyMap

DEFAULT_ANCHORS = (
    (0.0, (0, 0, 255)),
    (0.5, (255, 255, 0)),
    (1.0, (255, 0, 0)),
)


@dataclass(frozen=True)
class ColorMapSpec:
    """Piecewise-linear palette over [0, 1] plus the overlay opacity."""

    anchors: tuple[tuple[float, tuple[int, int, int]], ...] = DEFAULT_ANCHORS
    alpha: float = 0.4

    def __post_init__(self):
        positions = [p for p, _ in self.anchors]
        if len(positions) < 2 or positions[0] != 0.0 or positions[-1] != 1.0:
            raise ValueError("palette anchors must start at 0 and end at 1")
        if any(b <= a for a, b in zip(positions, positions[1:])):
            raise ValueError("palette anchor positions must be strictly increasing")
        for _, color in self.anchors:
            if len(color) != 3 or any(not (0 <= c <= 255) for c in color):
                raise ValueError(f"bad palette color {color!r}")
        if not (0.0 <= self.alpha <= 1.0):
            raise ValueError("overlay alpha must be in [0, 1]")


def _round_half_up(x: np.ndarray) -> np.ndarray:
    # half away from zero; all inputs here are non-negative
    return np.floor(x + 0.5)


def colorize(sm: SaliencyMap, cmap: ColorMapSpec = ColorMapSpec()) -> np.ndarray:
    """RGBA overlay layer for a normalized map: value 0 is fully
    transparent, positive values interpolate the palette anchors."""
    if not sm.normalized:
        raise ValueError("saliency map must be normalized before colorizing")
    v = sm.values
    positions = np.array([p for p, _ in cmap.anchors], dtype=np.float64)
    layer = np.zeros((sm.height, sm.width, 4), dtype=np.uint8)
    visible = v > 0.0
    for ch in range(3):
        anchor_vals = np.array([c[ch] for _, c in cmap.anchors], dtype=np.float64)
        interp = _round_half_up(np.interp(v, positions, anchor_vals))
        layer[:, :, ch] = np.where(visible, interp, 0).astype(np.uint8)
    alpha_byte = int(np.floor(255.0 * cmap.alpha + 0.5))
    layer[:, :, 3] = np.where(visible, alpha_byte, 0).astype(np.uint8)
    return layer


def overlay(img: Image, layer: np.ndarray) -> Image:
    """Source-over compositing of an RGBA layer onto the image.

    Pure integer math: out = round((a*layer + (255-a)*img) / 255) with
    half-away-from-zero rounding, so results are bit-reproducible.
    """
    if layer.shape != (img.height, img.width, 4):
        raise ValueError(
            f"layer shape {layer.shape} does not match image "
            f"{img.height}x{img.width}"
        )
    a = layer[:, :, 3:4].astype(np.int64)
    top = layer[:, :, :3].astype(np.int64)
    base = img.pixels.astype(np.int64)
    num = a * top + (255 - a) * base
    out = ((2 * num + 255) // 510).astype(np.uint8)
    return Image(out)


def draw_box(img: Image, box: BBox, color: tuple[int, int, int] = (0, 0, 0)) -> Image:
    """Copy of img with a 1-pixel border drawn on the box's outline."""
    if not box.within_bounds(img.width, img.height):
        raise ValueError(f"box {box} outside {img.width}x{img.height} image")
    px = img.pixels.copy()
    px[box.y1, box.x1 : box.x2] = color
    px[box.y2 - 1, box.x1 : box.x2] = color
    px[box.y1 : box.y2, box.x1] = color
    px[box.y1 : box.y2, box.x2 - 1] = color
    return Image(px)


def render_explanation(
    img: Image,
    box: BBox,
    sm: SaliencyMap,
    cmap: ColorMapSpec,
    out_path: str | Path,
) -> None:
    """Composite the colorized map over the image, outline the explained
    box in black, write a PNG."""
    composed = overlay(img, colorize(sm, cmap))
    write_image(draw_box(composed, box), out_path)
