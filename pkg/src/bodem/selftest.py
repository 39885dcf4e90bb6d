"""Built-in end-to-end property suite.

Every check is self-contained: it builds its own synthetic scene, runs the
real pipeline and verifies the result against an independent oracle
(brute-force enumeration, per-pixel recomputation, closed-form counts).
`bodem selftest` runs them all and prints one PASS/FAIL line per check.
"""

from __future__ import annotations

import json
import random
import tempfile
import threading
import time
from pathlib import Path

import numpy as np

from .augment import AugmentPlan, AnnotatedImage, generate_set, plan_counts
from .geometry import BBox, Rect, iou
from .image import Image, apply_mask, write_image
from .inquiry import DetectorAdapter, InquiryCache, SyntheticAdapter, detect, run_inquiry
from .maskgen import (
    MaskGenConfig,
    global_mask_areas,
    global_mask_specs,
    local_mask_areas,
    local_mask_specs,
)
from .saliency import ThresholdSchedule, difference, estimate, estimate_dynamic, normalize, similarity
from .heatmap import ColorMapSpec, colorize


# --------------------------------------------------------------------------
# independent oracles


def oracle_local_areas(ma: tuple[int, int, int, int], min_subarea: int) -> set:
    """Recursive fixpoint enumeration of all sub-areas, written on plain
    tuples and depth-first, independently of the production code."""
    found: set[tuple[int, int, int, int]] = set()

    def halves(r):
        x1, y1, x2, y2 = r
        out = []
        if y2 - y1 >= min_subarea:
            my = (y1 + y2) // 2
            out += [(x1, y1, x2, my), (x1, my, x2, y2)]
        if x2 - x1 >= min_subarea:
            mx = (x1 + x2) // 2
            out += [(x1, y1, mx, y2), (mx, y1, x2, y2)]
        return out

    def visit(r):
        for child in halves(r):
            if child not in found:
                found.add(child)
                visit(child)

    visit(ma)
    return found


def oracle_masking_area(box, dims, margin):
    width, height = dims
    return (
        max(box[0] - margin, 0),
        max(box[1] - margin, 0),
        min(box[2] + margin, width),
        min(box[3] + margin, height),
    )


class CountingAdapter(DetectorAdapter):
    """Wraps another adapter and counts how many images it was sent."""

    def __init__(self, inner: DetectorAdapter):
        self.inner = inner
        self.calls = 0
        self._lock = threading.Lock()

    def raw_detect(self, img):
        with self._lock:
            self.calls += 1
        return self.inner.raw_detect(img)


def _scene(width, height, rects, bg=(255, 255, 255), fg=(200, 30, 30)) -> Image:
    arr = np.empty((height, width, 3), dtype=np.uint8)
    arr[:, :] = bg
    colors = fg if isinstance(fg, list) else [fg] * len(rects)
    for rect, color in zip(rects, colors):
        arr[rect.y1 : rect.y2, rect.x1 : rect.x2] = color
    return Image(arr)


# --------------------------------------------------------------------------
# checks


def check_local_mask_oracle() -> None:
    started = time.monotonic()
    cfg = MaskGenConfig()

    # worked instance: 20x16 masking area divides exactly once, vertically
    got = local_mask_areas(BBox(100, 100, 110, 106), (300, 300), cfg)
    expect = [Rect(95, 95, 105, 111), Rect(105, 95, 115, 111)]
    assert got == expect, f"20x16 case: got {got}"

    # worked instance: 30x20 masking area yields 8 unique sub-areas
    got = local_mask_areas(BBox(5, 5, 25, 15), (100, 100), cfg)
    assert len(got) == 8, f"30x20 case: {len(got)} areas"
    sizes = sorted((r.width, r.height) for r in got)
    assert sizes == [(15, 10)] * 4 + [(15, 20)] * 2 + [(30, 10)] * 2, f"30x20 case: {sizes}"

    rng = random.Random(20250810)
    for trial in range(220):
        width = rng.randint(8, 220)
        height = rng.randint(8, 220)
        x1 = rng.randint(0, width - 2)
        x2 = rng.randint(x1 + 1, width)
        y1 = rng.randint(0, height - 2)
        y2 = rng.randint(y1 + 1, height)
        box = BBox(x1, y1, x2, y2)
        got_set = {
            (r.x1, r.y1, r.x2, r.y2)
            for r in local_mask_areas(box, (width, height), cfg)
        }
        ma = oracle_masking_area((x1, y1, x2, y2), (width, height), cfg.margin)
        want = oracle_local_areas(ma, cfg.min_subarea)
        assert got_set == want, (
            f"trial {trial}: box {box} in {width}x{height}: "
            f"{len(got_set)} areas vs oracle {len(want)}"
        )
    elapsed = time.monotonic() - started
    assert elapsed < 5.0, f"oracle sweep took {elapsed:.2f}s (budget 5s)"


def check_global_partition() -> None:
    started = time.monotonic()
    for cell in (20, 50):
        spans = sorted(
            {k * cell + r for k in (1, 2, 3) for r in (-1, 0, 1)} | {cell // 2}
        )
        for width in spans:
            for height in spans:
                rects = global_mask_areas((width, height), cell)
                cover = np.zeros((height, width), dtype=np.int32)
                for r in rects:
                    cover[r.y1 : r.y2, r.x1 : r.x2] += 1
                assert (cover == 1).all(), (
                    f"{width}x{height} cell {cell}: cover counts "
                    f"{cover.min()}..{cover.max()}"
                )
                for a, b in zip(rects, rects[1:]):
                    assert not a.intersects(b), f"adjacent rects overlap: {a} {b}"
    elapsed = time.monotonic() - started
    assert elapsed < 1.0, f"partition sweep took {elapsed:.2f}s (budget 1s)"


def check_score_arithmetic() -> None:
    a = BBox(0, 0, 10, 10)
    b = BBox(5, 0, 15, 10)
    # pixel-membership oracle for the overlapping pair
    pixels_a = {(x, y) for x in range(0, 10) for y in range(0, 10)}
    pixels_b = {(x, y) for x in range(5, 15) for y in range(0, 10)}
    want = len(pixels_a & pixels_b) / len(pixels_a | pixels_b)
    assert iou(a, b) == want == 1 / 3, f"iou {iou(a, b)} vs oracle {want}"

    far = BBox(20, 20, 30, 30)
    assert similarity(a, [b, far]) == 1 / 3
    assert similarity(a, []) == 0.0

    half = BBox(0, 0, 10, 5)  # IOU 0.5 with a
    assert iou(a, half) == 0.5
    assert difference(a, [half], 0.8, 1120.0) == 2.0
    assert difference(a, [], 0.8, float(640 + 480)) == 1120.0
    assert difference(a, [a], 0.8, 1120.0) == 0.0


def check_additivity_oracle() -> None:
    rect = Rect(20, 24, 44, 40)
    img = _scene(64, 64, [rect])
    adapter = SyntheticAdapter("plain")
    baseline = detect(adapter, img)
    assert len(baseline) == 1
    box = baseline[0]
    dims = (64, 64)
    cfg = MaskGenConfig()
    local = local_mask_specs(box, dims, cfg)
    global_ = [s for c in (20, 50) for s in global_mask_specs(dims, c)]
    result = run_inquiry(adapter, img, local, global_, parallelism=1)
    masks = local + global_
    sm = estimate(box, masks, result, dims, 0.8)

    penalty = float(sum(dims))
    diffs = [
        difference(box, result.detections_for(s), 0.8, penalty) for s in masks
    ]
    worst = 0.0
    for py in range(64):
        for px in range(64):
            want = sum(
                d
                for d, s in zip(diffs, masks)
                if s.area.x1 <= px < s.area.x2 and s.area.y1 <= py < s.area.y2
            )
            worst = max(worst, abs(sm.values[py, px] - want))
    assert worst <= 1e-9, f"worst per-pixel accumulation error {worst}"
    assert np.any(sm.values), "scene produced an all-zero map, oracle is vacuous"


def _zero_saliency_scene():
    rect = Rect(70, 45, 130, 75)  # 60x30 object
    img = _scene(200, 120, [rect])
    adapter = SyntheticAdapter("plain")
    baseline = detect(adapter, img)
    assert baseline == [BBox(70, 45, 130, 75)], f"baseline {baseline}"
    box = baseline[0]
    dims = (200, 120)
    cfg = MaskGenConfig()
    local = local_mask_specs(box, dims, cfg)
    global_ = [s for c in (20, 50) for s in global_mask_specs(dims, c)]
    result = run_inquiry(adapter, img, local, global_, parallelism=1)
    return img, adapter, box, rect, dims, local + global_, result


def check_zero_saliency() -> None:
    img, adapter, box, rect, dims, masks, result = _zero_saliency_scene()
    penalty = float(sum(dims))

    interior = [s for s in masks if rect.contains(s.area)]
    background = [
        s for s in masks if s.kind == "global" and not rect.intersects(s.area)
    ]
    assert interior and background, "scene lacks interior or background masks"
    for spec in interior + background:
        masked = apply_mask(img, spec.area)
        assert np.array_equal(masked.pixels, img.pixels), (
            f"uniform-region mask {spec.area} changed the image"
        )
        d = difference(box, result.detections_for(spec), 0.8, penalty)
        assert d == 0.0, f"mask {spec.area} contributed {d}"

    sm = normalize(estimate(box, masks, result, dims, 0.8))
    layer = colorize(sm, ColorMapSpec())
    colored = layer[:, :, 3] > 0
    straddling = np.zeros((dims[1], dims[0]), dtype=bool)
    for spec in masks:
        a = spec.area
        if a.intersects(rect) and not rect.contains(a):
            straddling[a.y1 : a.y2, a.x1 : a.x2] = True
    stray = colored & ~straddling
    assert not stray.any(), f"{int(stray.sum())} colored pixels outside border masks"
    assert colored.any(), "no colored pixels at all, confinement check is vacuous"


def check_penalty_path() -> None:
    rect = Rect(70, 45, 130, 75)
    img = _scene(200, 120, [rect])
    adapter = SyntheticAdapter("strict")
    baseline = detect(adapter, img)
    assert baseline == [BBox(70, 45, 130, 75)], f"strict baseline {baseline}"
    box = baseline[0]
    dims = (200, 120)
    penalty = float(sum(dims))
    cfg = MaskGenConfig()
    local = local_mask_specs(box, dims, cfg)
    result = run_inquiry(adapter, img, local, [], parallelism=1)

    suppressed = []
    for spec in local:
        dets = result.detections_for(spec)
        if not dets:
            suppressed.append(spec)
            d = difference(box, dets, 0.8, penalty)
            assert d == penalty, f"suppressing mask scored {d}, want {penalty}"
    assert suppressed, "no mask suppressed detection entirely"

    # one suppressing mask alone puts exactly w+h on its cells, 0 elsewhere
    spec = suppressed[0]
    sm = estimate(box, [spec], result, dims, 0.8)
    area = np.zeros((dims[1], dims[0]), dtype=bool)
    area[spec.area.y1 : spec.area.y2, spec.area.x1 : spec.area.x2] = True
    assert (sm.values[area] == penalty).all(), "penalty cells off"
    assert (sm.values[~area] == 0.0).all(), "cells outside the mask are nonzero"


def check_threshold_dynamics() -> None:
    # monotonicity over the sweep grid on a scene with border effects
    _, _, box, _, dims, masks, result = _zero_saliency_scene()
    grid = ThresholdSchedule(base=0.8, step=0.05, max=1.0).thresholds()
    assert grid == [0.8, 0.85, 0.9, 0.95, 1.0], f"sweep grid {grid}"
    previous = None
    for t in grid:
        sm = estimate(box, masks, result, dims, t)
        if previous is not None:
            assert (sm.values >= previous).all(), f"map shrank when t rose to {t}"
        previous = sm.values

    # exact re-detection under every mask: sweep ends at (1.0, zero map)
    rect = Rect(60, 40, 120, 80)  # aligned to the 20px grid
    img = _scene(200, 120, [rect])
    adapter = SyntheticAdapter("plain")
    baseline = detect(adapter, img)
    box = baseline[0]
    global_ = global_mask_specs((200, 120), 20)
    result = run_inquiry(adapter, img, [], global_, parallelism=1)
    for spec in global_:
        assert similarity(box, result.detections_for(spec)) == 1.0
    t_used, sm = estimate_dynamic(box, global_, result, (200, 120))
    assert t_used == 1.0, f"sweep stopped at {t_used}"
    assert not np.any(sm.values), "map should be identically zero"


def check_query_economy() -> None:
    rects = [Rect(20, 20, 60, 50), Rect(120, 30, 170, 70), Rect(200, 120, 260, 160)]
    img = _scene(300, 200, rects)
    adapter = CountingAdapter(SyntheticAdapter("plain"))
    dims = (300, 200)
    cfg = MaskGenConfig()
    global_ = [s for c in (20, 50) for s in global_mask_specs(dims, c)]
    cache = InquiryCache()
    baseline = cache.ensure_baseline(adapter, img)
    assert len(baseline) == 3, f"baseline {baseline}"
    local_counts = []
    results = []
    for box in baseline:
        local = local_mask_specs(box, dims, cfg)
        local_counts.append(len(local))
        results.append(
            run_inquiry(adapter, img, local, global_, parallelism=4, cache=cache)
        )
    closed_form = 1 + sum(local_counts) + len(global_)
    assert adapter.calls == closed_form, (
        f"sent {adapter.calls} queries, closed form {closed_form}"
    )
    assert cache.total_queries == closed_form, (
        f"cache counted {cache.total_queries}, closed form {closed_form}"
    )
    # the baseline probe happened up front, so per-box counts carry only
    # that box's fresh masks; global masks are never re-queried
    assert results[0].query_count == local_counts[0] + len(global_)
    assert results[1].query_count == local_counts[1], "global masks re-queried"
    assert results[2].query_count == local_counts[2], "global masks re-queried"


def check_explain_determinism() -> None:
    from . import cli

    rects = [Rect(40, 30, 100, 70), Rect(130, 80, 180, 110)]
    img = _scene(220, 140, rects)
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        src = tmp / "scene.png"
        write_image(img, src)
        outputs = {}
        for par in (1, 8):
            out = tmp / f"run_p{par}"
            code = cli.main(
                [
                    "explain",
                    str(src),
                    "--detector",
                    "synthetic",
                    "--dynamic",
                    "--parallel",
                    str(par),
                    "--out",
                    str(out),
                ]
            )
            assert code == 0, f"explain exited {code}"
            outputs[par] = out
        names = sorted(p.name for p in outputs[1].iterdir())
        assert names == sorted(p.name for p in outputs[8].iterdir())
        for name in names:
            b1 = (outputs[1] / name).read_bytes()
            b8 = (outputs[8] / name).read_bytes()
            if name == "report.json":
                r1, r8 = json.loads(b1), json.loads(b8)
                for r in (r1, r8):
                    r.pop("timing")
                    r["config"].pop("parallelism")
                    r["config"].pop("out")
                    for entry in r["explanations"]:
                        entry.pop("seconds")
                assert r1 == r8, "report differs beyond timing/config fields"
            else:
                assert b1 == b8, f"{name} differs between parallelism 1 and 8"


def check_augmentation_counts() -> None:
    assert plan_counts(2, 20) == 10
    assert plan_counts(4, 20) == 5
    assert plan_counts(5, 20) == 4
    assert plan_counts(3, 20) == 7

    rects = [Rect(30, 30, 140, 100), Rect(160, 40, 260, 120)]
    img = _scene(300, 160, rects, fg=[(200, 30, 30), (30, 80, 200)])
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        src = tmp / "sample.png"
        write_image(img, src)
        annotated = AnnotatedImage(
            path=str(src),
            boxes=(
                BBox(30, 30, 140, 100, label="TABLE"),
                BBox(160, 40, 260, 120, label="LIST"),
                BBox(160, 40, 200, 60, label="ICON"),  # not a target class
            ),
        )
        plan = AugmentPlan(classes=("TABLE", "LIST"), per_image=20, seed=7)
        cfg = MaskGenConfig()
        manifests = []
        for run in ("a", "b"):
            manifests.append(generate_set([annotated], plan, cfg, tmp / run))
        m1, m2 = manifests
        assert m1 == m2, "manifests differ across identical runs"
        assert len(m1["outputs"]) == 20, f"{len(m1['outputs'])} outputs, want 20"
        per_instance = {}
        for rec in m1["outputs"]:
            per_instance.setdefault(rec["instance_index"], []).append(rec)
        assert {k: len(v) for k, v in per_instance.items()} == {0: 10, 1: 10}
        for recs in per_instance.values():
            drawn = {tuple(sorted(r["mask"].items())) for r in recs}
            assert len(drawn) == len(recs), "duplicate mask drawn for one instance"
        files1 = sorted((tmp / "a").iterdir())
        for f1 in files1:
            f2 = tmp / "b" / f1.name
            assert f1.read_bytes() == f2.read_bytes(), f"{f1.name} not reproducible"
        source_boxes = [
            {"x1": b.x1, "y1": b.y1, "x2": b.x2, "y2": b.y2, "label": b.label}
            for b in annotated.boxes
        ]
        with open(tmp / "a" / "annotations.json", "r", encoding="utf-8") as fh:
            for record in json.load(fh):
                assert record["boxes"] == source_boxes, "annotations were altered"


CHECKS = [
    ("local-mask-oracle", check_local_mask_oracle),
    ("global-partition", check_global_partition),
    ("score-arithmetic", check_score_arithmetic),
    ("additivity-oracle", check_additivity_oracle),
    ("zero-saliency", check_zero_saliency),
    ("penalty-path", check_penalty_path),
    ("threshold-dynamics", check_threshold_dynamics),
    ("query-economy", check_query_economy),
    ("explain-determinism", check_explain_determinism),
    ("augmentation-counts", check_augmentation_counts),
]


def run_all(stream=None) -> bool:
    import sys

    stream = stream or sys.stdout
    all_ok = True
    for name, fn in CHECKS:
        try:
            fn()
        except AssertionError as exc:
            print(f"FAIL {name}: {exc}", file=stream)
            all_ok = False
        else:
            print(f"PASS {name}", file=stream)
    return all_ok
