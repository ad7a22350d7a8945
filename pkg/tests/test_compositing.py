"""Blending equations vs an independent source-over oracle; colormaps; emission."""

from __future__ import annotations

import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from citytwin.compositing import (
    Colormap,
    CompositingError,
    RgbaImage,
    apply_colormap,
    blend_pixel,
    composite,
    to_gif_bytes,
    to_png_bytes,
)

from oracles import source_over

unit = st.floats(min_value=0.0, max_value=1.0, allow_nan=False)
# subnormal alphas make the premultiplied oracle itself lose all precision
alpha = st.floats(min_value=0.0, max_value=1.0, allow_nan=False, allow_subnormal=False)


class TestBlendPixel:
    def test_worked_example(self):
        out = blend_pixel(np.array([0.0, 0.25, 0.5, 1.0]), np.array([1.0, 0.75, 0.5, 0.5]))
        assert out[3] == pytest.approx(1.0)
        assert out[0] == pytest.approx(0.5)

    def test_transparent_top_is_identity(self):
        bg = np.array([0.3, 0.6, 0.9, 0.8])
        out = blend_pixel(bg, np.array([1.0, 1.0, 1.0, 0.0]))
        assert np.allclose(out, bg, atol=0)

    def test_opaque_top_replaces(self):
        top = np.array([0.1, 0.2, 0.3, 1.0])
        out = blend_pixel(np.array([0.9, 0.8, 0.7, 0.6]), top)
        assert np.array_equal(out, top)

    def test_both_transparent_is_transparent_black(self):
        out = blend_pixel(np.array([0.5, 0.5, 0.5, 0.0]), np.array([0.7, 0.7, 0.7, 0.0]))
        assert np.array_equal(out, np.zeros(4))

    @given(unit, unit, unit, alpha, unit, unit, unit, alpha)
    @settings(max_examples=300, deadline=None)
    def test_matches_source_over_oracle(self, r1, g1, b1, a1, r2, g2, b2, a2):
        bg = np.array([r1, g1, b1, a1])
        top = np.array([r2, g2, b2, a2])
        assert np.abs(blend_pixel(bg, top) - source_over(bg, top)).max() < 1e-6

    @given(unit, unit, unit, unit)
    @settings(max_examples=200, deadline=None)
    def test_mix_alpha_monotone(self, a1, a2, d1, d2):
        base = blend_pixel(np.array([0, 0, 0, a1]), np.array([0, 0, 0, a2]))[3]
        grown1 = blend_pixel(np.array([0, 0, 0, min(1, a1 + d1)]), np.array([0, 0, 0, a2]))[3]
        grown2 = blend_pixel(np.array([0, 0, 0, a1]), np.array([0, 0, 0, min(1, a2 + d2)]))[3]
        assert grown1 >= base - 1e-12
        assert grown2 >= base - 1e-12


class TestComposite:
    def test_single_layer_identity(self):
        img = RgbaImage(np.random.default_rng(0).uniform(0, 1, (4, 5, 4)))
        out = composite([img])
        assert np.array_equal(out.pixels, img.pixels)

    def test_transparent_middle_layer_drops_out(self):
        rng = np.random.default_rng(1)
        bottom = RgbaImage(rng.uniform(0, 1, (3, 3, 4)))
        top = RgbaImage(rng.uniform(0, 1, (3, 3, 4)))
        middle = RgbaImage.filled(3, 3, (0.5, 0.5, 0.5, 0.0))
        with_middle = composite([bottom, middle, top])
        without = composite([bottom, top])
        assert np.allclose(with_middle.pixels, without.pixels, atol=1e-12)

    def test_opaque_top_layer_wins(self):
        rng = np.random.default_rng(2)
        stack = [RgbaImage(rng.uniform(0, 1, (2, 2, 4))) for _ in range(3)]
        stack[-1].pixels[..., 3] = 1.0
        out = composite(stack)
        assert np.allclose(out.pixels, stack[-1].pixels)

    def test_random_stacks_match_reference_fold(self):
        rng = np.random.default_rng(3)
        for _ in range(25):
            depth = rng.integers(2, 6)
            stack = [RgbaImage(rng.uniform(0, 1, (6, 4, 4))) for _ in range(depth)]
            opac = rng.uniform(0, 1, depth).tolist()
            got = composite(stack, opac)
            acc = stack[0].pixels.copy()
            acc[..., 3] *= opac[0]
            for img, o in zip(stack[1:], opac[1:]):
                px = img.pixels.copy()
                px[..., 3] *= o
                acc = source_over(acc, px)
            assert np.abs(got.pixels - acc).max() < 1e-6

    def test_dimension_mismatch_raises(self):
        with pytest.raises(CompositingError):
            composite([RgbaImage.filled(2, 2, (0, 0, 0, 1)), RgbaImage.filled(3, 2, (0, 0, 0, 1))])

    def test_opacity_count_must_match(self):
        with pytest.raises(CompositingError):
            composite([RgbaImage.filled(2, 2, (0, 0, 0, 1))], [0.5, 0.5])


class TestColormap:
    CM = Colormap(stops=((0.0, (0.0, 0.0, 1.0, 1.0)), (10.0, (1.0, 0.0, 0.0, 0.5))))

    def test_exact_stop_value(self):
        assert np.allclose(self.CM.lookup(np.array([0.0]))[0], (0, 0, 1, 1))
        assert np.allclose(self.CM.lookup(np.array([10.0]))[0], (1, 0, 0, 0.5))

    def test_midpoint_interpolates_channelwise(self):
        assert np.allclose(self.CM.lookup(np.array([5.0]))[0], (0.5, 0, 0.5, 0.75))

    def test_clamping_beyond_ends(self):
        assert np.allclose(self.CM.lookup(np.array([-5.0]))[0], (0, 0, 1, 1))
        assert np.allclose(self.CM.lookup(np.array([25.0]))[0], (1, 0, 0, 0.5))

    def test_nearest_mode(self):
        cm = Colormap(stops=self.CM.stops, mode="nearest")
        assert np.allclose(cm.lookup(np.array([4.9]))[0], (0, 0, 1, 1))
        assert np.allclose(cm.lookup(np.array([5.1]))[0], (1, 0, 0, 0.5))
        # ties go to the lower stop
        assert np.allclose(cm.lookup(np.array([5.0]))[0], (0, 0, 1, 1))

    def test_nodata_transparent_and_opacity_scaling(self):
        img = apply_colormap(np.array([[0.0, np.nan]]), self.CM, opacity=0.5)
        assert img.pixels[0, 0, 3] == pytest.approx(0.5)
        assert img.pixels[0, 1, 3] == 0.0

    def test_zero_opacity_fully_transparent(self):
        img = apply_colormap(np.array([[0.0, 5.0, 10.0]]), self.CM, opacity=0.0)
        assert np.all(img.pixels[..., 3] == 0.0)

    def test_invalid_colormaps_raise(self):
        with pytest.raises(CompositingError):
            Colormap(stops=())
        with pytest.raises(CompositingError):
            Colormap(stops=((0.0, (0, 0, 0, 1)), (0.0, (1, 1, 1, 1))))
        with pytest.raises(CompositingError):
            Colormap(stops=((0.0, (0, 0, 0, 1)),), mode="cubic")


class TestEmission:
    def test_png_deterministic(self):
        rng = np.random.default_rng(4)
        img = RgbaImage(rng.uniform(0, 1, (16, 16, 4)))
        assert to_png_bytes(img) == to_png_bytes(img)

    def test_gif_frame_delays_bit_exact(self):
        frames = [
            RgbaImage.filled(8, 8, (1, 0, 0, 1)),
            RgbaImage.filled(8, 8, (0, 1, 0, 1)),
            RgbaImage.filled(8, 8, (0, 0, 1, 1)),
        ]
        blob = to_gif_bytes(frames, delay_cs=37)
        im = Image.open(io.BytesIO(blob))
        assert im.n_frames == 3
        for k in range(im.n_frames):
            im.seek(k)
            assert im.info["duration"] == 370  # Pillow reports ms; 37 cs exactly

    def test_gif_rejects_empty_and_negative(self):
        with pytest.raises(CompositingError):
            to_gif_bytes([], 10)
        with pytest.raises(CompositingError):
            to_gif_bytes([RgbaImage.filled(2, 2, (0, 0, 0, 1))], -1)
