import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from empi.metrics import (
    LUMA_WEIGHTS,
    SSIM_C1,
    SSIM_C2,
    depth_l1,
    gaussian_window,
    luma,
    psnr,
    ssim,
    ssim_map,
)


def brute_force_ssim(a, b):
    """Windowed SSIM evaluated with explicit loops; the independent oracle."""
    x = a @ LUMA_WEIGHTS if a.ndim == 3 else a.astype(np.float64)
    y = b @ LUMA_WEIGHTS if b.ndim == 3 else b.astype(np.float64)
    k1 = gaussian_window()
    k2 = np.outer(k1, k1)
    h, w = x.shape
    vals = []
    for i in range(h - 10):
        for j in range(w - 10):
            wx = x[i : i + 11, j : j + 11]
            wy = y[i : i + 11, j : j + 11]
            mx = (k2 * wx).sum()
            my = (k2 * wy).sum()
            sxx = (k2 * wx * wx).sum() - mx * mx
            syy = (k2 * wy * wy).sum() - my * my
            sxy = (k2 * wx * wy).sum() - mx * my
            vals.append(
                ((2 * mx * my + SSIM_C1) * (2 * sxy + SSIM_C2))
                / ((mx * mx + my * my + SSIM_C1) * (sxx + syy + SSIM_C2))
            )
    return float(np.mean(vals))


class TestPsnr:
    def test_identical_images_hit_sentinel(self):
        img = np.random.default_rng(0).uniform(0, 1, (16, 16, 3))
        assert psnr(img, img) == 99.0

    def test_uniform_error_exactly_20db(self):
        a = np.full((8, 8, 3), 0.5)
        b = a + 0.1
        assert abs(psnr(a, b) - 20.0) < 1e-9

    def test_scalar_oracle(self):
        rng = np.random.default_rng(1)
        a = rng.uniform(0, 1, (6, 5, 3))
        b = rng.uniform(0, 1, (6, 5, 3))
        acc = 0.0
        for i in range(6):
            for j in range(5):
                for c in range(3):
                    acc += (a[i, j, c] - b[i, j, c]) ** 2
        expected = 10.0 * np.log10(1.0 / (acc / (6 * 5 * 3)))
        assert abs(psnr(a, b) - expected) < 1e-9

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape"):
            psnr(np.zeros((4, 4)), np.zeros((4, 5)))

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=20, deadline=None)
    def test_symmetry(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.uniform(0, 1, (8, 8))
        b = rng.uniform(0, 1, (8, 8))
        assert psnr(a, b) == psnr(b, a)


class TestSsim:
    def test_identical_is_one(self):
        img = np.random.default_rng(2).uniform(0, 1, (20, 24, 3))
        assert abs(ssim(img, img) - 1.0) < 1e-12

    def test_perturbed_below_one(self):
        rng = np.random.default_rng(3)
        img = rng.uniform(0.2, 0.8, (20, 24, 3))
        noisy = np.clip(img + rng.normal(0, 0.05, img.shape), 0, 1)
        assert ssim(img, noisy) < 1.0 - 1e-9

    def test_constant_half_vs_its_negative(self):
        a = np.full((16, 16, 3), 0.5)
        assert abs(ssim(a, 1.0 - a) - 1.0) < 1e-12

    def test_checkerboard_brute_force_oracle(self):
        rng = np.random.default_rng(4)
        ys, xs = np.mgrid[0:14, 0:15]
        checker = ((ys + xs) % 2).astype(np.float64)
        a = np.stack([checker, 0.5 * checker, 1 - checker], axis=-1)
        b = np.clip(a + rng.normal(0, 0.1, a.shape), 0, 1)
        assert abs(ssim(a, b) - brute_force_ssim(a, b)) < 1e-6
        # also against a smooth pair
        g = np.linspace(0, 1, 14)[:, None] * np.linspace(0, 1, 15)[None, :]
        c = np.stack([g, g, g], axis=-1)
        d = np.clip(c + rng.normal(0, 0.03, c.shape), 0, 1)
        assert abs(ssim(c, d) - brute_force_ssim(c, d)) < 1e-6

    def test_too_small_is_error(self):
        with pytest.raises(ValueError, match="smaller than"):
            ssim(np.zeros((10, 12)), np.zeros((10, 12)))

    def test_map_shape(self):
        m = ssim_map(np.zeros((15, 13)), np.zeros((15, 13)))
        assert m.shape == (5, 3)

    def test_luma_conversion(self):
        img = np.zeros((2, 2, 3))
        img[..., 0] = 1.0
        np.testing.assert_allclose(luma(img), np.full((2, 2), 0.299))


class TestDepthL1:
    def test_masked_mean(self):
        a = np.array([[1.0, 2.0], [3.0, 4.0]])
        b = np.array([[1.5, 2.0], [5.0, 4.0]])
        mask = np.array([[True, False], [True, False]])
        assert abs(depth_l1(a, b, mask) - 1.25) < 1e-12

    def test_empty_mask_is_error(self):
        a = np.ones((3, 3))
        with pytest.raises(ValueError, match="mask"):
            depth_l1(a, a, np.zeros((3, 3), dtype=bool))

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=25, deadline=None)
    def test_triangle_inequality(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.uniform(0.1, 10, (6, 6))
        b = rng.uniform(0.1, 10, (6, 6))
        c = rng.uniform(0.1, 10, (6, 6))
        mask = rng.uniform(size=(6, 6)) < 0.7
        if not mask.any():
            mask[0, 0] = True
        assert depth_l1(a, c, mask) <= depth_l1(a, b, mask) + depth_l1(b, c, mask) + 1e-12
