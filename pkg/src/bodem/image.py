"""8-bit RGB raster, mean-fill masking and PNG I/O.

All pixel math is integer arithmetic with half-away-from-zero rounding so
that masked images are bit-identical across platforms and runs.
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from PIL import Image as PILImage
from PIL import UnidentifiedImageError

from .geometry import Rect


class BoundsError(ValueError):
    """A rectangle reaches outside the image."""


class DecodeError(ValueError):
    """The file cannot be decoded as a raster image."""


class UnsupportedFormatError(ValueError):
    """Decodable, but not an 8-bit RGB or grayscale raster."""


class Image:
    """Immutable RGB image backed by a read-only (height, width, 3) uint8 array."""

    __slots__ = ("_px",)

    def __init__(self, pixels: np.ndarray):
        arr = np.array(pixels, dtype=np.uint8, copy=True)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"expected (h, w, 3) pixel array, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("image must be at least 1x1")
        arr.setflags(write=False)
        self._px = arr

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Image":
        # internal fast path: caller guarantees a fresh, valid uint8 array
        img = object.__new__(cls)
        arr.setflags(write=False)
        img._px = arr
        return img

    @classmethod
    def filled(cls, width: int, height: int, color: tuple[int, int, int]) -> "Image":
        arr = np.empty((height, width, 3), dtype=np.uint8)
        arr[:, :] = color
        return cls._wrap(arr)

    @property
    def pixels(self) -> np.ndarray:
        return self._px

    @property
    def width(self) -> int:
        return self._px.shape[1]

    @property
    def height(self) -> int:
        return self._px.shape[0]


def _check_bounds(img: Image, rect: Rect) -> None:
    if not rect.within_bounds(img.width, img.height):
        raise BoundsError(
            f"rect ({rect.x1},{rect.y1},{rect.x2},{rect.y2}) outside "
            f"{img.width}x{img.height} image"
        )


def region_mean(img: Image, rect: Rect) -> tuple[int, int, int]:
    """Per-channel mean color over the rectangle, rounded half away from zero.

    Computed with exact integer arithmetic: round(s / n) = (2s + n) // (2n)
    for non-negative sums.
    """
    _check_bounds(img, rect)
    region = img.pixels[rect.y1 : rect.y2, rect.x1 : rect.x2]
    sums = region.reshape(-1, 3).sum(axis=0, dtype=np.int64)
    n = rect.area
    return tuple(int((2 * s + n) // (2 * n)) for s in sums)


def apply_mask(img: Image, rect: Rect) -> Image:
    """Copy of img with every pixel in rect replaced by the region's mean color.

    Pixels outside rect are byte-identical to the input; the input image is
    never modified.
    """
    color = region_mean(img, rect)
    px = img.pixels.copy()
    px[rect.y1 : rect.y2, rect.x1 : rect.x2] = color
    return Image._wrap(px)


def load_image(path: str | Path) -> Image:
    """Load an 8-bit RGB or grayscale PNG; grayscale is promoted to RGB."""
    try:
        with PILImage.open(path) as im:
            mode = im.mode
            if mode == "RGB":
                arr = np.asarray(im, dtype=np.uint8)
            elif mode == "L":
                gray = np.asarray(im, dtype=np.uint8)
                arr = np.repeat(gray[:, :, np.newaxis], 3, axis=2)
            else:
                raise UnsupportedFormatError(
                    f"unsupported image mode {mode!r} in {path}; "
                    "expected 8-bit RGB or grayscale"
                )
    except UnidentifiedImageError as exc:
        raise DecodeError(f"cannot decode {path}: {exc}") from exc
    except OSError as exc:
        if isinstance(exc, FileNotFoundError):
            raise
        raise DecodeError(f"cannot decode {path}: {exc}") from exc
    return Image._wrap(np.ascontiguousarray(arr))


def write_image(img: Image, path: str | Path) -> None:
    PILImage.fromarray(img.pixels, mode="RGB").save(path, format="PNG")


def encode_png(img: Image) -> bytes:
    """PNG bytes of the image, as sent to detectors."""
    buf = io.BytesIO()
    PILImage.fromarray(img.pixels, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def decode_png(data: bytes) -> Image:
    """Inverse of encode_png, with the same format contract as load_image."""
    try:
        with PILImage.open(io.BytesIO(data)) as im:
            mode = im.mode
            if mode == "RGB":
                arr = np.asarray(im, dtype=np.uint8)
            elif mode == "L":
                gray = np.asarray(im, dtype=np.uint8)
                arr = np.repeat(gray[:, :, np.newaxis], 3, axis=2)
            else:
                raise UnsupportedFormatError(f"unsupported image mode {mode!r}")
    except UnidentifiedImageError as exc:
        raise DecodeError(f"cannot decode image bytes: {exc}") from exc
    except OSError as exc:
        raise DecodeError(f"cannot decode image bytes: {exc}") from exc
    return Image._wrap(np.ascontiguousarray(arr))
