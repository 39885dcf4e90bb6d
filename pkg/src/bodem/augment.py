"""Occlusion-augmentation dataset builder.

Each output image is the source with exactly one local mask applied to one
target-class instance; the per-instance count is ceil(total / instances)
so every image yields at least the requested number of masked versions.
Mask areas are drawn without replacement with a seed derived from the
global seed, the image path and the instance index, so the output set is
reproducible and independent of scheduling.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import random
from dataclasses import dataclass
from pathlib import Path

from .geometry import BBox, box_to_json
from .image import Image, apply_mask, load_image, write_image
from .maskgen import MaskGenConfig, local_mask_areas

log = logging.getLogger(__name__)


class AnnotationError(ValueError):
    """The annotation file does not match the expected schema."""


@dataclass(frozen=True)
class AnnotatedImage:
    """A source image with its ground-truth boxes."""

    path: str
    boxes: tuple[BBox, ...]


@dataclass(frozen=True)
class AugmentPlan:
    """Which classes to mask, how many masked versions per image, and the
    seed that pins the sampling."""

    classes: tuple[str, ...]
    per_image: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.per_image < 1:
            raise ValueError("per_image must be >= 1")
        if not self.classes:
            raise ValueError("at least one target class is required")


def plan_counts(instances: int, total: int) -> int:
    """Masked versions per instance: ceil(total / instances)."""
    if instances < 1:
        raise ValueError("cannot plan masks for an image with no target instances")
    if total < 1:
        raise ValueError("total must be >= 1")
    return math.ceil(total / instances)


def load_annotations(path: str | Path) -> list[AnnotatedImage]:
    """Read the annotation file: a JSON array of
    {"image": path, "boxes": [{"x1","y1","x2","y2","label"}, ...]}."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except ValueError as exc:
        raise AnnotationError(f"annotation file is not valid JSON: {exc}") from exc
    if not isinstance(data, list):
        raise AnnotationError("annotation file must be a JSON array")
    out = []
    for i, entry in enumerate(data):
        if not isinstance(entry, dict) or "image" not in entry or "boxes" not in entry:
            raise AnnotationError(f"entry {i} must have 'image' and 'boxes'")
        boxes = []
        for j, b in enumerate(entry["boxes"]):
            try:
                label = b["label"]
                if not isinstance(label, str) or not label:
                    raise AnnotationError(
                        f"entry {i} box {j}: label must be a non-empty string"
                    )
                boxes.append(
                    BBox(int(b["x1"]), int(b["y1"]), int(b["x2"]), int(b["y2"]), label=label)
                )
            except (KeyError, TypeError, ValueError) as exc:
                if isinstance(exc, AnnotationError):
                    raise
                raise AnnotationError(f"entry {i} box {j} is invalid: {exc}") from exc
        out.append(AnnotatedImage(path=str(entry["image"]), boxes=tuple(boxes)))
    return out


def instance_seed(global_seed: int, image_path: str, instance_index: int) -> int:
    """Stable per-instance RNG seed (independent of scheduling and platform)."""
    digest = hashlib.sha256(
        f"{global_seed}|{image_path}|{instance_index}".encode("utf-8")
    ).digest()
    return int.from_bytes(digest[:8], "big")


def generate_set(
    inputs: list[AnnotatedImage],
    plan: AugmentPlan,
    cfg: MaskGenConfig,
    out_dir: str | Path,
) -> dict:
    """Write one masked image per drawn sub-area and return the manifest.

    Annotations are copied through unchanged to out_dir/annotations.json;
    the manifest (also written to out_dir/manifest.json) records every
    output with its source, instance, mask rectangle and seed, plus any
    shortfalls where an instance had fewer unique sub-areas than requested.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    targets = set(plan.classes)
    manifest: dict = {
        "plan": {
            "classes": list(plan.classes),
            "per_image": plan.per_image,
            "seed": plan.seed,
            "margin": cfg.margin,
            "min_subarea": cfg.min_subarea,
        },
        "outputs": [],
        "shortfalls": [],
        "skipped": [],
    }
    out_annotations = []
    for source in inputs:
        img = load_image(source.path)
        for box in source.boxes:
            if not box.within_bounds(img.width, img.height):
                raise AnnotationError(
                    f"{source.path}: box {box} outside {img.width}x{img.height} image"
                )
        instances = [
            (j, box) for j, box in enumerate(source.boxes) if box.label in targets
        ]
        if not instances:
            log.warning("%s: no instances of target classes, skipped", source.path)
            manifest["skipped"].append(
                {"source": source.path, "reason": "no target-class instances"}
            )
            continue
        per_instance = plan_counts(len(instances), plan.per_image)
        stem = Path(source.path).stem
        for j, box in instances:
            areas = local_mask_areas(box, (img.width, img.height), cfg)
            seed = instance_seed(plan.seed, source.path, j)
            take = min(per_instance, len(areas))
            if take < per_instance:
                manifest["shortfalls"].append(
                    {
                        "source": source.path,
                        "instance_index": j,
                        "requested": per_instance,
                        "available": len(areas),
                    }
                )
            drawn = random.Random(seed).sample(areas, take)
            for k, area in enumerate(drawn):
                name = f"{stem}_obj{j}_mask{k}.png"
                write_image(apply_mask(img, area), out_dir / name)
                manifest["outputs"].append(
                    {
                        "output": name,
                        "source": source.path,
                        "instance_index": j,
                        "instance": box_to_json(box),
                        "mask": {
                            "x1": area.x1,
                            "y1": area.y1,
                            "x2": area.x2,
                            "y2": area.y2,
                        },
                        "instance_seed": seed,
                    }
                )
                out_annotations.append(
                    {"image": name, "boxes": [box_to_json(b) for b in source.boxes]}
                )
    with open(out_dir / "annotations.json", "w", encoding="utf-8") as fh:
        json.dump(out_annotations, fh, indent=2)
        fh.write("\n")
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return manifest
