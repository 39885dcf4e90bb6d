import random
from fractions import Fraction

import pytest

from bodem.geometry import BBox, Rect, box_to_json, clamp_box, iou


def pixel_iou(a, b):
    """Brute-force oracle: count pixel memberships, exact rational result."""
    pa = {(x, y) for x in range(a.x1, a.x2) for y in range(a.y1, a.y2)}
    pb = {(x, y) for x in range(b.x1, b.x2) for y in range(b.y1, b.y2)}
    union = pa | pb
    if not union:
        return Fraction(0)
    return Fraction(len(pa & pb), len(union))


def random_box(rng, size=32):
    x1 = rng.randint(0, size - 2)
    x2 = rng.randint(x1 + 1, size)
    y1 = rng.randint(0, size - 2)
    y2 = rng.randint(y1 + 1, size)
    return BBox(x1, y1, x2, y2)


class TestIou:
    def test_identity(self):
        assert iou(BBox(0, 0, 10, 10), BBox(0, 0, 10, 10)) == 1.0

    def test_disjoint(self):
        assert iou(BBox(0, 0, 10, 10), BBox(20, 20, 30, 30)) == 0.0

    def test_one_third_overlap(self):
        a, b = BBox(0, 0, 10, 10), BBox(5, 0, 15, 10)
        assert pixel_iou(a, b) == Fraction(1, 3)
        assert iou(a, b) == 1 / 3

    def test_touching_edges_do_not_intersect(self):
        # half-open convention: [0,10) and [10,20) share no pixel
        assert iou(BBox(0, 0, 10, 10), BBox(10, 0, 20, 10)) == 0.0

    def test_symmetry_and_bounds(self):
        rng = random.Random(417)
        for _ in range(300):
            a, b = random_box(rng), random_box(rng)
            v = iou(a, b)
            assert v == iou(b, a)
            assert 0.0 <= v <= 1.0
            assert iou(a, a) == 1.0

    def test_matches_pixel_oracle(self):
        rng = random.Random(991)
        for _ in range(200):
            a, b = random_box(rng), random_box(rng)
            assert abs(iou(a, b) - float(pixel_iou(a, b))) < 1e-12


class TestRect:
    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            Rect(5, 5, 5, 10)
        with pytest.raises(ValueError):
            Rect(5, 5, 10, 5)
        with pytest.raises(ValueError):
            Rect(10, 0, 5, 5)

    def test_dimensions(self):
        r = Rect(2, 3, 7, 11)
        assert (r.width, r.height, r.area) == (5, 8, 40)

    def test_contains_and_intersects(self):
        outer = Rect(0, 0, 10, 10)
        assert outer.contains(Rect(2, 2, 8, 8))
        assert not outer.contains(Rect(2, 2, 12, 8))
        assert outer.intersects(Rect(9, 9, 20, 20))
        assert not outer.intersects(Rect(10, 0, 20, 10))

    def test_within_bounds(self):
        assert Rect(0, 0, 16, 16).within_bounds(16, 16)
        assert not Rect(0, 0, 17, 16).within_bounds(16, 16)


class TestBBox:
    def test_label_and_score_are_optional(self):
        b = BBox(0, 0, 4, 4)
        assert b.label is None and b.score is None
        tagged = BBox(0, 0, 4, 4, label="CAR", score=0.93)
        assert tagged.label == "CAR"

    def test_to_json_drops_unset_fields(self):
        assert box_to_json(BBox(1, 2, 3, 4)) == {"x1": 1, "y1": 2, "x2": 3, "y2": 4}
        tagged = box_to_json(BBox(1, 2, 3, 4, label="BUS", score=0.5))
        assert tagged["label"] == "BUS" and tagged["score"] == 0.5


class TestClampBox:
    def test_clamps_to_image(self):
        assert clamp_box(-5, 0, 20, 10, 16, 16) == BBox(0, 0, 16, 10)

    def test_degenerate_after_clamping(self):
        assert clamp_box(20, 20, 30, 30, 16, 16) is None
        assert clamp_box(-10, -10, 0, 5, 16, 16) is None

    def test_keeps_label_and_score(self):
        b = clamp_box(1, 1, 5, 5, 16, 16, label="x", score=0.1)
        assert b == BBox(1, 1, 5, 5, label="x", score=0.1)
