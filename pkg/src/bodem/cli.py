"""Command-line entry point.

    bodem explain IMAGE [--detector ...] [--dynamic] [--out DIR] ...
    bodem augment ANNOTATIONS --classes A,B [--per-image N] [--seed S] ...
    bodem selftest

Exit codes for explain: 0 ok, 2 detector unreachable, 3 no baseline
detections, 4 invalid configuration. For augment: 4 invalid annotations,
5 output directory not writable. selftest exits 1 when any property fails.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from .augment import AnnotationError, AugmentPlan, generate_set, load_annotations
from .geometry import box_to_json
from .heatmap import ColorMapSpec, render_explanation
from .image import DecodeError, UnsupportedFormatError, load_image
from .inquiry import (
    DetectorAdapter,
    DetectorError,
    InquiryCache,
    RemoteAdapter,
    SubprocessAdapter,
    SyntheticAdapter,
    run_inquiry,
)
from .maskgen import MaskGenConfig, global_mask_specs, local_mask_specs
from .saliency import (
    ThresholdSchedule,
    estimate,
    estimate_dynamic,
    normalize,
    write_matrix,
    write_sidecar,
)

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_DETECTOR_UNREACHABLE = 2
EXIT_NO_DETECTIONS = 3
EXIT_BAD_CONFIG = 4
EXIT_OUTPUT_UNWRITABLE = 5


class ConfigError(ValueError):
    """Invalid run configuration (exit code 4)."""


@dataclass
class RunConfig:
    """Validated explain-run settings."""

    detector: str = "synthetic"
    threshold: float = 0.8
    dynamic: bool = False
    margin: int = 5
    min_subarea: int = 20
    global_cells: tuple[int, ...] = (20, 50)
    boxes: str = "all"
    parallelism: int = 8
    alpha: float = 0.4
    palette: str | None = None
    out_dir: str = "bodem_out"
    timeout: float = 30.0
    retries: int = 2

    maskgen: MaskGenConfig = field(init=False)
    colormap: ColorMapSpec = field(init=False)

    def __post_init__(self):
        if not (0.0 < self.threshold <= 1.0):
            raise ConfigError(f"threshold must be in (0, 1], got {self.threshold}")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")
        if self.boxes != "all":
            try:
                int(self.boxes)
            except ValueError:
                raise ConfigError(
                    f"box selector must be 'all' or an index, got {self.boxes!r}"
                ) from None
        try:
            self.maskgen = MaskGenConfig(
                margin=self.margin,
                min_subarea=self.min_subarea,
                global_cells=self.global_cells,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        try:
            anchors = parse_palette(self.palette)
            self.colormap = ColorMapSpec(anchors=anchors, alpha=self.alpha)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def echo(self) -> dict:
        return {
            "detector": self.detector,
            "threshold": self.threshold,
            "dynamic": self.dynamic,
            "margin": self.margin,
            "min_subarea": self.min_subarea,
            "global_cells": list(self.global_cells),
            "boxes": self.boxes,
            "parallelism": self.parallelism,
            "alpha": self.alpha,
            "palette": self.palette,
            "out": self.out_dir,
        }


def parse_palette(spec: str | None):
    """Parse "0:0000ff,0.5:ffff00,1:ff0000" into palette anchors."""
    if spec is None:
        return ColorMapSpec().anchors
    anchors = []
    for part in spec.split(","):
        pos_s, _, hexcolor = part.partition(":")
        try:
            pos = float(pos_s)
            if len(hexcolor) != 6:
                raise ValueError
            color = tuple(int(hexcolor[i : i + 2], 16) for i in (0, 2, 4))
        except ValueError:
            raise ValueError(f"bad palette entry {part!r}, expected pos:rrggbb") from None
        anchors.append((pos, color))
    return tuple(anchors)


def parse_cells(spec: str) -> tuple[int, ...]:
    spec = spec.strip()
    if spec in ("", "none"):
        return ()
    try:
        cells = tuple(int(c) for c in spec.split(","))
    except ValueError:
        raise ConfigError(f"bad global cell list {spec!r}") from None
    return cells


def adapter_from_spec(spec: str, timeout: float, retries: int) -> DetectorAdapter:
    if spec.startswith("synthetic"):
        _, _, mode = spec.partition(":")
        try:
            return SyntheticAdapter(mode or "plain")
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    if spec.startswith("http://") or spec.startswith("https://"):
        return RemoteAdapter(spec, timeout=timeout, retries=retries)
    if spec.startswith("cmd:"):
        cmd = spec[len("cmd:") :].strip()
        if not cmd:
            raise ConfigError("empty detector command")
        return SubprocessAdapter(cmd, timeout=timeout)
    raise ConfigError(
        f"unknown detector spec {spec!r}; expected synthetic[:mode], a URL, or cmd:..."
    )


def cmd_explain(cfg: RunConfig, image_path: str) -> int:
    started = time.monotonic()
    try:
        img = load_image(image_path)
    except FileNotFoundError:
        print(f"error: image not found: {image_path}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except (DecodeError, UnsupportedFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG

    adapter = adapter_from_spec(cfg.detector, cfg.timeout, cfg.retries)
    try:
        if isinstance(adapter, RemoteAdapter) and not adapter.health():
            print(
                f"error: detector at {adapter.base_url} failed the health check",
                file=sys.stderr,
            )
            return EXIT_DETECTOR_UNREACHABLE
        if isinstance(adapter, SubprocessAdapter):
            try:
                adapter.start()
            except DetectorError as exc:
                print(f"error: {exc}", file=sys.stderr)
                return EXIT_DETECTOR_UNREACHABLE

        dims = (img.width, img.height)
        cache = InquiryCache()
        try:
            baseline = cache.ensure_baseline(adapter, img)
        except DetectorError as exc:
            print(f"error: baseline detection failed: {exc}", file=sys.stderr)
            return EXIT_DETECTOR_UNREACHABLE
        if not baseline:
            print("error: detector found no objects in the image", file=sys.stderr)
            return EXIT_NO_DETECTIONS

        if cfg.boxes == "all":
            selected = list(enumerate(baseline))
        else:
            idx = int(cfg.boxes)
            if not (0 <= idx < len(baseline)):
                print(
                    f"error: box index {idx} out of range, "
                    f"{len(baseline)} detection(s) available",
                    file=sys.stderr,
                )
                return EXIT_BAD_CONFIG
            selected = [(idx, baseline[idx])]

        out_dir = Path(cfg.out_dir)
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            print(f"error: cannot create output directory: {exc}", file=sys.stderr)
            return EXIT_OUTPUT_UNWRITABLE

        global_specs = []
        for cell in cfg.maskgen.global_cells:
            global_specs.extend(global_mask_specs(dims, cell))

        schedule = ThresholdSchedule(base=cfg.threshold)
        entries = []
        for idx, box in selected:
            box_started = time.monotonic()
            local_specs = local_mask_specs(box, dims, cfg.maskgen)
            try:
                result = run_inquiry(
                    adapter, img, local_specs, global_specs, cfg.parallelism, cache
                )
            except DetectorError as exc:
                print(f"error: inquiry failed: {exc}", file=sys.stderr)
                return EXIT_DETECTOR_UNREACHABLE
            masks = local_specs + global_specs
            if cfg.dynamic:
                threshold_used, sm = estimate_dynamic(box, masks, result, dims, schedule)
            else:
                threshold_used = cfg.threshold
                sm = estimate(box, masks, result, dims, cfg.threshold)
            smn = normalize(sm)
            heatmap_name = f"heatmap_{idx}.png"
            matrix_name = f"saliency_{idx}.csv"
            render_explanation(img, box, smn, cfg.colormap, out_dir / heatmap_name)
            write_matrix(smn, out_dir / matrix_name)
            write_sidecar(box, threshold_used, True, out_dir / f"saliency_{idx}.json")
            entries.append(
                {
                    "box_index": idx,
                    "box": box_to_json(box),
                    "threshold_used": threshold_used,
                    "query_count": result.query_count,
                    "local_masks": len(local_specs),
                    "global_masks": len(global_specs),
                    "heatmap": heatmap_name,
                    "saliency": matrix_name,
                    "seconds": round(time.monotonic() - box_started, 6),
                }
            )

        report = {
            "image": str(image_path),
            "width": img.width,
            "height": img.height,
            "config": cfg.echo(),
            "baseline": [box_to_json(b) for b in baseline],
            "explanations": entries,
            "total_queries": cache.total_queries,
            "timing": {"seconds": round(time.monotonic() - started, 6)},
        }
        with open(out_dir / "report.json", "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2)
            fh.write("\n")
        return EXIT_OK
    finally:
        adapter.close()


def cmd_augment(args) -> int:
    try:
        plan = AugmentPlan(
            classes=tuple(c for c in args.classes.split(",") if c),
            per_image=args.per_image,
            seed=args.seed,
        )
        cfg = MaskGenConfig(margin=args.margin, min_subarea=args.min_subarea)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    try:
        inputs = load_annotations(args.annotations)
    except FileNotFoundError:
        print(f"error: annotation file not found: {args.annotations}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except AnnotationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    try:
        manifest = generate_set(inputs, plan, cfg, args.out)
    except AnnotationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except (FileNotFoundError, DecodeError, UnsupportedFormatError) as exc:
        print(f"error: cannot read source image: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except OSError as exc:
        print(f"error: cannot write outputs: {exc}", file=sys.stderr)
        return EXIT_OUTPUT_UNWRITABLE
    outputs = len(manifest["outputs"])
    skipped = len(manifest["skipped"])
    shortfalls = len(manifest["shortfalls"])
    print(
        f"wrote {outputs} masked image(s) to {args.out} "
        f"({skipped} image(s) skipped, {shortfalls} shortfall(s))"
    )
    if outputs == 0:
        print("warning: no target-class instances found anywhere", file=sys.stderr)
    return EXIT_OK


def cmd_selftest(args) -> int:
    try:
        anchors = parse_palette(args.palette)
        ColorMapSpec(anchors=anchors, alpha=args.alpha)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    from . import selftest

    return EXIT_OK if selftest.run_all() else EXIT_FAILURE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bodem",
        description="Black-box object detector explanation by structured masking",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_explain = sub.add_parser("explain", help="explain detections in one image")
    p_explain.add_argument("image", help="input PNG")
    p_explain.add_argument(
        "--detector",
        default=None,
        help="synthetic[:plain|strict], http(s)://host:port, or cmd:'...' "
        "(default: $BODEM_DETECTOR_URL or synthetic)",
    )
    p_explain.add_argument("--threshold", type=float, default=0.8)
    p_explain.add_argument(
        "--dynamic",
        action="store_true",
        help="raise the threshold in 0.05 steps until the map is non-empty",
    )
    p_explain.add_argument("--margin", type=int, default=5)
    p_explain.add_argument("--min-subarea", type=int, default=20)
    p_explain.add_argument(
        "--global-cells",
        default="20,50",
        help="comma-separated grid cell sizes; empty or 'none' disables global masks",
    )
    p_explain.add_argument(
        "--boxes", default="all", help="'all' or the index of one baseline detection"
    )
    p_explain.add_argument("--parallel", type=int, default=8)
    p_explain.add_argument("--alpha", type=float, default=0.4)
    p_explain.add_argument(
        "--palette", default=None, help="palette anchors, e.g. 0:0000ff,0.5:ffff00,1:ff0000"
    )
    p_explain.add_argument("--timeout", type=float, default=30.0)
    p_explain.add_argument("--retries", type=int, default=2)
    p_explain.add_argument("--out", default="bodem_out")

    p_augment = sub.add_parser("augment", help="build an occlusion-augmented dataset")
    p_augment.add_argument("annotations", help="annotation JSON file")
    p_augment.add_argument(
        "--classes", required=True, help="comma-separated target class names"
    )
    p_augment.add_argument("--per-image", type=int, default=20)
    p_augment.add_argument("--seed", type=int, default=0)
    p_augment.add_argument("--margin", type=int, default=5)
    p_augment.add_argument("--min-subarea", type=int, default=20)
    p_augment.add_argument("--out", default="bodem_augmented")

    p_selftest = sub.add_parser(
        "selftest", help="run the built-in end-to-end property suite"
    )
    p_selftest.add_argument("--alpha", type=float, default=0.4)
    p_selftest.add_argument("--palette", default=None)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, stream=sys.stderr, format="%(message)s")
    args = build_parser().parse_args(argv)
    if args.command == "explain":
        detector = args.detector or os.environ.get("BODEM_DETECTOR_URL") or "synthetic"
        try:
            cfg = RunConfig(
                detector=detector,
                threshold=args.threshold,
                dynamic=args.dynamic,
                margin=args.margin,
                min_subarea=args.min_subarea,
                global_cells=parse_cells(args.global_cells),
                boxes=args.boxes,
                parallelism=args.parallel,
                alpha=args.alpha,
                palette=args.palette,
                out_dir=args.out,
                timeout=args.timeout,
                retries=args.retries,
            )
        except ConfigError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_BAD_CONFIG
        try:
            return cmd_explain(cfg, args.image)
        except ConfigError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_BAD_CONFIG
    if args.command == "augment":
        return cmd_augment(args)
    if args.command == "selftest":
        return cmd_selftest(args)
    return EXIT_BAD_CONFIG


if __name__ == "__main__":
    sys.exit(main())
