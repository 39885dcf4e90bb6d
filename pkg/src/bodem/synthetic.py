"""Built-in deterministic reference detector.

Treats the color of pixel (0, 0) as background and reports the tight
bounding box of every 4-connected component of non-background pixels.
Because mean-filling a uniform region leaves the image untouched, this
detector gives saliency an analytic oracle: masks inside a solid object
or inside the background contribute nothing, masks across a boundary do.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .geometry import BBox, DetectionSet
from .image import Image

STRICT_MIN_AREA = 25


def synthetic_detect(img: Image, mode: str = "plain") -> DetectionSet:
    """Detect connected foreground components as boxes, sorted by (y1, x1).

    strict mode drops components that are not uniformly one color or that
    cover fewer than STRICT_MIN_AREA pixels.
    """
    if mode not in ("plain", "strict"):
        raise ValueError(f"unknown synthetic mode {mode!r}")
    px = img.pixels
    background = px[0, 0]
    foreground = np.any(px != background, axis=2)
    labels, count = ndimage.label(foreground)  # default structure = 4-connectivity
    boxes = []
    for i, sl in enumerate(ndimage.find_objects(labels, count), start=1):
        if sl is None:
            continue
        ys, xs = sl
        if mode == "strict":
            component = labels[sl] == i
            if int(component.sum()) < STRICT_MIN_AREA:
                continue
            colors = px[sl][component]
            if not (colors == colors[0]).all():
                continue
        boxes.append(BBox(int(xs.start), int(ys.start), int(xs.stop), int(ys.stop)))
    boxes.sort(key=lambda b: (b.y1, b.x1))
    return boxes
