import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import nightglow as ng
from nightglow.grids import DimensionError, reflect_pad_2d

from conftest import random_grid


def brute_force_convolve(image: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Direct-summation oracle: reflect-pad then quadruple loop."""
    h, w, c = image.shape
    side = kernel.shape[0]
    pad = side // 2
    out = np.zeros((h, w, c))
    for ch in range(c):
        plane = np.pad(image[:, :, ch], pad, mode="reflect")
        for y in range(h):
            for x in range(w):
                acc = 0.0
                for ky in range(side):
                    for kx in range(side):
                        acc += kernel[ky, kx] * plane[y + pad - (ky - pad), x + pad - (kx - pad)]
                out[y, x, ch] = acc
    return out


class TestPixelGrid:
    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            ng.PixelGrid(np.full((8, 8, 3), 1.5))
        with pytest.raises(ValueError):
            ng.PixelGrid(np.full((8, 8, 3), -0.1))

    def test_rejects_tiny_images(self):
        with pytest.raises(DimensionError):
            ng.PixelGrid(np.zeros((4, 8, 3)))

    def test_rejects_bad_channel_count(self):
        with pytest.raises(DimensionError):
            ng.PixelGrid(np.zeros((8, 8, 2)))

    def test_immutable(self):
        g = ng.PixelGrid(np.zeros((8, 8, 3)))
        with pytest.raises(ValueError):
            g.data[0, 0, 0] = 1.0


class TestKernel2D:
    def test_simplex_enforced(self):
        with pytest.raises(ValueError):
            ng.Kernel2D(np.full((3, 3), 0.2))
        with pytest.raises(ValueError):
            ng.Kernel2D(-np.ones((1, 1)))

    def test_even_side_rejected(self):
        with pytest.raises(DimensionError):
            ng.Kernel2D(np.full((2, 2), 0.25))

    def test_normalized_constructor(self, rng):
        k = ng.Kernel2D.normalized(rng.random((5, 5)))
        assert k.weights.min() >= 0
        assert abs(k.weights.sum() - 1.0) <= 1e-6


class TestConvolveSame:
    def test_delta_kernel_is_identity(self, rng):
        img = random_grid(rng, 12, 10)
        out = ng.convolve_same(img, ng.Kernel2D.delta(3))
        np.testing.assert_allclose(out, img.data, atol=1e-7)

    def test_constant_image_preserved(self, rng):
        img = ng.PixelGrid(np.full((9, 9, 3), 0.37))
        k = ng.Kernel2D.normalized(rng.random((5, 5)))
        out = ng.convolve_same(img, k)
        np.testing.assert_allclose(out, 0.37, atol=1e-7)

    def test_unit_pixel_uniform_kernel(self):
        img = np.zeros((9, 9, 1))
        img[4, 4, 0] = 1.0
        out = ng.convolve_same(ng.PixelGrid(img), ng.Kernel2D.uniform(3))
        expected = np.zeros((9, 9))
        expected[3:6, 3:6] = 1.0 / 9.0
        np.testing.assert_allclose(out[:, :, 0], expected, atol=1e-12)

    def test_matches_brute_force_oracle(self, rng):
        img = random_grid(rng, 10, 11)
        k = ng.Kernel2D.normalized(rng.random((5, 5)))
        out = ng.convolve_same(img, k)
        np.testing.assert_allclose(out, brute_force_convolve(img.data, k.weights), atol=1e-6)

    def test_oversized_kernel_rejected(self):
        img = ng.PixelGrid(np.zeros((8, 8, 1)))
        with pytest.raises(DimensionError):
            ng.convolve_same(img, ng.Kernel2D.delta(19))

    def test_linearity(self, rng):
        a, b = 0.6, 0.3
        x = random_grid(rng, 9, 9)
        y = random_grid(rng, 9, 9)
        k = ng.Kernel2D.normalized(rng.random((3, 3)))
        mix = ng.PixelGrid(a * x.data + b * y.data)
        lhs = ng.convolve_same(mix, k)
        rhs = a * ng.convolve_same(x, k) + b * ng.convolve_same(y, k)
        np.testing.assert_allclose(lhs, rhs, atol=1e-6)

    @given(st.integers(0, 2 ** 32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_simplex_kernel_respects_bounds(self, seed):
        r = np.random.default_rng(seed)
        img = ng.PixelGrid(r.random((8, 8, 1)))
        k = ng.Kernel2D.normalized(r.random((3, 3)) + 1e-9)
        out = ng.convolve_same(img, k)
        assert out.max() <= img.data.max() + 1e-9
        assert out.min() >= img.data.min() - 1e-9


class TestReflectPad:
    def test_pad_wider_than_axis(self):
        arr = np.arange(12, dtype=float).reshape(3, 4)
        out = reflect_pad_2d(arr, 5, 1)
        assert out.shape == (13, 6)
        inner = reflect_pad_2d(reflect_pad_2d(arr, 2, 1), 2, 0)
        np.testing.assert_array_equal(out, reflect_pad_2d(inner, 1, 0))


class TestLuminance:
    def test_max_channel_pixel(self):
        data = np.zeros((8, 8, 3))
        data[0, 0] = (0.2, 0.9, 0.1)
        data[1, 1] = (0.5, 0.5, 0.5)
        lum = ng.luminance(ng.PixelGrid(data))
        assert lum.channels == 1
        assert lum.data[0, 0, 0] == pytest.approx(0.9)
        assert lum.data[1, 1, 0] == pytest.approx(0.5)

    def test_all_black(self):
        lum = ng.luminance(ng.PixelGrid(np.zeros((8, 8, 3))))
        assert not lum.data.any()

    def test_single_channel_passthrough(self, rng):
        img = random_grid(rng, 8, 8, channels=1)
        assert ng.luminance(img) is img
