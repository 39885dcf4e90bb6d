import numpy as np
import pytest

from bodem.geometry import BBox
from bodem.heatmap import (
    ColorMapSpec,
    colorize,
    draw_box,
    overlay,
    render_explanation,
)
from bodem.image import Image
from bodem.saliency import SaliencyMap


def norm_map(values):
    return SaliencyMap(np.asarray(values, dtype=np.float64), normalized=True)


class TestColorMapSpec:
    def test_default_palette(self):
        spec = ColorMapSpec()
        assert spec.anchors[0] == (0.0, (0, 0, 255))
        assert spec.anchors[-1] == (1.0, (255, 0, 0))
        assert spec.alpha == 0.4

    def test_validation(self):
        with pytest.raises(ValueError):
            ColorMapSpec(anchors=((0.1, (0, 0, 0)), (1.0, (255, 0, 0))))
        with pytest.raises(ValueError):
            ColorMapSpec(anchors=((0.0, (0, 0, 0)), (0.9, (255, 0, 0))))
        with pytest.raises(ValueError):
            ColorMapSpec(
                anchors=((0.0, (0, 0, 0)), (0.5, (1, 1, 1)), (0.5, (2, 2, 2)), (1.0, (3, 3, 3)))
            )
        with pytest.raises(ValueError):
            ColorMapSpec(anchors=((0.0, (0, 0, 300)), (1.0, (255, 0, 0))))
        with pytest.raises(ValueError):
            ColorMapSpec(alpha=1.5)


class TestColorize:
    def test_zero_is_transparent(self):
        layer = colorize(norm_map([[0.0]]))
        assert layer[0, 0].tolist() == [0, 0, 0, 0]

    def test_one_is_top_anchor(self):
        layer = colorize(norm_map([[1.0]]))
        assert layer[0, 0].tolist() == [255, 0, 0, 102]

    def test_midpoint_of_yellow_red_segment(self):
        layer = colorize(norm_map([[0.75]]))
        assert layer[0, 0].tolist() == [255, 128, 0, 102]

    def test_requires_normalized_map(self):
        raw = SaliencyMap(np.ones((2, 2)), normalized=False)
        with pytest.raises(ValueError):
            colorize(raw)

    def test_monotone_redness(self):
        values = np.linspace(0.0, 1.0, 101).reshape(1, -1)
        layer = colorize(norm_map(values))
        red = layer[0, :, 0].astype(int)
        assert (np.diff(red) >= 0).all()


class TestOverlay:
    def test_transparent_layer_is_identity(self):
        img = Image.filled(6, 5, (12, 34, 56))
        layer = np.zeros((5, 6, 4), dtype=np.uint8)
        out = overlay(img, layer)
        assert np.array_equal(out.pixels, img.pixels)

    def test_opaque_layer_replaces(self):
        img = Image.filled(4, 4, (12, 34, 56))
        layer = np.zeros((4, 4, 4), dtype=np.uint8)
        layer[:, :, :3] = (9, 8, 7)
        layer[:, :, 3] = 255
        out = overlay(img, layer)
        assert (out.pixels == (9, 8, 7)).all()

    def test_white_under_translucent_red(self):
        img = Image.filled(1, 1, (255, 255, 255))
        layer = np.array([[[255, 0, 0, 102]]], dtype=np.uint8)
        out = overlay(img, layer)
        assert out.pixels[0, 0].tolist() == [255, 153, 153]

    def test_dimension_mismatch(self):
        img = Image.filled(4, 4, (0, 0, 0))
        with pytest.raises(ValueError):
            overlay(img, np.zeros((5, 4, 4), dtype=np.uint8))

    def test_locality(self):
        img = Image.filled(8, 8, (50, 60, 70))
        layer = np.zeros((8, 8, 4), dtype=np.uint8)
        layer[2:4, 2:4] = (255, 0, 0, 102)
        out = overlay(img, layer)
        untouched = np.ones((8, 8), dtype=bool)
        untouched[2:4, 2:4] = False
        assert np.array_equal(out.pixels[untouched], img.pixels[untouched])
        assert not np.array_equal(out.pixels[2, 2], img.pixels[0, 0])


class TestDrawBox:
    def test_one_pixel_border(self):
        img = Image.filled(10, 10, (255, 255, 255))
        out = draw_box(img, BBox(2, 3, 7, 8))
        px = out.pixels
        assert (px[3, 2:7] == 0).all()  # top edge
        assert (px[7, 2:7] == 0).all()  # bottom edge
        assert (px[3:8, 2] == 0).all()  # left edge
        assert (px[3:8, 6] == 0).all()  # right edge
        assert (px[4, 3] == 255).all()  # interior untouched

    def test_box_must_fit(self):
        img = Image.filled(10, 10, (255, 255, 255))
        with pytest.raises(ValueError):
            draw_box(img, BBox(5, 5, 15, 15))


class TestRenderExplanation:
    def test_zero_map_renders_original_plus_border(self, tmp_path):
        from bodem.image import load_image

        img = Image.filled(20, 20, (200, 210, 220))
        sm = norm_map(np.zeros((20, 20)))
        out = tmp_path / "h.png"
        render_explanation(img, BBox(4, 4, 12, 12), sm, ColorMapSpec(), out)
        rendered = load_image(out)
        expected = draw_box(img, BBox(4, 4, 12, 12))
        assert np.array_equal(rendered.pixels, expected.pixels)

    def test_rendering_is_bit_reproducible(self, tmp_path):
        rng = np.random.default_rng(3)
        img = Image(rng.integers(0, 256, size=(24, 30, 3), dtype=np.uint8))
        values = rng.random((24, 30))
        values[0, 0] = 1.0  # pin the max so the map is genuinely normalized
        sm = norm_map(values)
        p1, p2 = tmp_path / "a.png", tmp_path / "b.png"
        render_explanation(img, BBox(2, 2, 20, 20), sm, ColorMapSpec(), p1)
        render_explanation(img, BBox(2, 2, 20, 20), sm, ColorMapSpec(), p2)
        assert p1.read_bytes() == p2.read_bytes()
