"""Model wrappers behind the shim.

A ModelWrapper turns pixels into raw detections. If it declares an
input_size, the server resizes each request to that resolution before
predicting and rescales the boxes back to the submitted image's pixel
grid afterwards; wrappers that work at native resolution leave it None.
"""

from __future__ import annotations

import json
from collections import deque
from pathlib import Path

import numpy as np

# (x1, y1, x2, y2, label, score) in the coordinates of the pixels the
# wrapper was given; label and score may be None
RawDetection = tuple[float, float, float, float, "str | None", "float | None"]


class ModelWrapper:
    input_size: tuple[int, int] | None = None  # (width, height) or native
    thread_safe: bool = True
    confidence: float = 0.0
    resample: str = "bilinear"

    def predict(self, pixels: np.ndarray) -> list[RawDetection]:
        raise NotImplementedError


class EchoModel(ModelWrapper):
    """Returns the same fixture boxes for every image.

    A protocol test double: it lets clients conformance-test the wire
    contract without any ML dependency.
    """

    def __init__(self, boxes: list[dict]):
        self.boxes: list[RawDetection] = []
        for b in boxes:
            self.boxes.append(
                (
                    float(b["x1"]),
                    float(b["y1"]),
                    float(b["x2"]),
                    float(b["y2"]),
                    b.get("label"),
                    float(b["score"]) if b.get("score") is not None else None,
                )
            )

    @classmethod
    def from_file(cls, path: str | Path) -> "EchoModel":
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        boxes = data["boxes"] if isinstance(data, dict) else data
        return cls(boxes)

    def predict(self, pixels: np.ndarray) -> list[RawDetection]:
        return list(self.boxes)


def _connected_boxes(foreground: np.ndarray) -> list[tuple[int, int, int, int]]:
    """Tight boxes of 4-connected foreground components (plain BFS)."""
    height, width = foreground.shape
    seen = np.zeros_like(foreground, dtype=bool)
    boxes = []
    for sy in range(height):
        for sx in range(width):
            if not foreground[sy, sx] or seen[sy, sx]:
                continue
            x1 = x2 = sx
            y1 = y2 = sy
            queue = deque([(sy, sx)])
            seen[sy, sx] = True
            while queue:
                cy, cx = queue.popleft()
                x1, x2 = min(x1, cx), max(x2, cx)
                y1, y2 = min(y1, cy), max(y2, cy)
                for ny, nx in ((cy - 1, cx), (cy + 1, cx), (cy, cx - 1), (cy, cx + 1)):
                    if 0 <= ny < height and 0 <= nx < width:
                        if foreground[ny, nx] and not seen[ny, nx]:
                            seen[ny, nx] = True
                            queue.append((ny, nx))
            boxes.append((x1, y1, x2 + 1, y2 + 1))
    boxes.sort(key=lambda b: (b[1], b[0]))
    return boxes


class SyntheticShapeModel(ModelWrapper):
    """Toy detector that boxes connected non-background regions.

    Runs at a fixed internal resolution to exercise the server's
    coordinate rescaling path, the way real models with a fixed input
    size do.
    """

    resample = "nearest"  # keep flat colors flat across the resize

    def __init__(self, input_size: tuple[int, int] = (160, 160)):
        self.input_size = input_size

    def predict(self, pixels: np.ndarray) -> list[RawDetection]:
        background = pixels[0, 0]
        foreground = np.any(pixels != background, axis=2)
        return [
            (float(x1), float(y1), float(x2), float(y2), "shape", 1.0)
            for x1, y1, x2, y2 in _connected_boxes(foreground)
        ]


class TorchvisionModel(ModelWrapper):
    """Wraps a torchvision detection model (weights download required).

    Inference-mode and single-threaded: most torch models are not safe
    under concurrent forward calls, so the server serializes access.
    """

    thread_safe = False

    def __init__(self, name: str, confidence: float = 0.5):
        import torch
        import torchvision

        factory = getattr(torchvision.models.detection, name, None)
        if factory is None:
            raise ValueError(f"unknown torchvision detection model {name!r}")
        self._torch = torch
        self._model = factory(weights="DEFAULT")
        self._model.eval()
        self.confidence = confidence
        weights = torchvision.models.get_weight(
            f"{''.join(part.capitalize() for part in name.split('_'))}_Weights.DEFAULT"
        )
        self.categories = list(weights.meta.get("categories", []))

    def predict(self, pixels: np.ndarray) -> list[RawDetection]:
        torch = self._torch
        tensor = torch.from_numpy(pixels.copy()).permute(2, 0, 1).float() / 255.0
        with torch.inference_mode():
            output = self._model([tensor])[0]
        out: list[RawDetection] = []
        for box, label, score in zip(
            output["boxes"].tolist(),
            output["labels"].tolist(),
            output["scores"].tolist(),
        ):
            name = None
            if 0 <= label < len(self.categories):
                name = self.categories[label]
            out.append((box[0], box[1], box[2], box[3], name, float(score)))
        return out


def load_model(spec: str, confidence: float = 0.0) -> ModelWrapper:
    """Build a wrapper from a CLI model spec.

    echo:FILE.json     fixture boxes, returned verbatim for every request
    synthetic[:WxH]    toy shape detector at an internal resolution
    torchvision:NAME   a real torchvision detection model
    """
    kind, _, arg = spec.partition(":")
    if kind == "echo":
        if not arg:
            raise ValueError("echo model needs a fixture file: echo:boxes.json")
        model = EchoModel.from_file(arg)
    elif kind == "synthetic":
        if arg:
            w, _, h = arg.partition("x")
            model = SyntheticShapeModel((int(w), int(h)))
        else:
            model = SyntheticShapeModel()
    elif kind == "torchvision":
        if not arg:
            raise ValueError("torchvision model needs a name, e.g. torchvision:fasterrcnn_resnet50_fpn")
        return TorchvisionModel(arg, confidence=confidence)
    else:
        raise ValueError(f"unknown model spec {spec!r}")
    model.confidence = confidence
    return model
