import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import naive_ssim
from spikedehaze.metrics import gaussian_window, psnr, ssim


class TestPsnr:
    def test_identical_images_capped(self):
        img = np.random.default_rng(0).random((3, 16, 16))
        assert psnr(img, img) == 100.0

    def test_constant_offset_closed_form(self):
        target = np.full((3, 8, 8), 0.4)
        assert psnr(target + 0.1, target) == pytest.approx(20.0, abs=1e-9)

    def test_half_offset_closed_form(self):
        # offset 0.5 on half the pixels, 0 elsewhere: MSE = 0.125
        target = np.full((1, 4, 4), 0.2)
        pred = target.copy()
        pred.reshape(-1)[: pred.size // 2] += 0.5
        expected = 10.0 * np.log10(1.0 / 0.125)
        assert psnr(pred, target) == pytest.approx(expected, abs=1e-9)
        assert expected == pytest.approx(9.031, abs=1e-3)

    def test_monotone_in_noise_amplitude(self):
        rng = np.random.default_rng(1)
        target = rng.random((3, 16, 16)) * 0.5 + 0.25
        noise = rng.standard_normal(target.shape) * 0.01
        assert psnr(target + noise, target) > psnr(target + 3 * noise, target)

    def test_clamps_before_scoring(self):
        target = np.full((1, 4, 4), 0.5)
        assert psnr(target + 2.0, target) == \
            pytest.approx(psnr(np.ones_like(target), target))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            psnr(np.zeros((3, 8, 8)), np.zeros((3, 8, 9)))


class TestSsim:
    def test_identical_images(self):
        img = np.random.default_rng(2).random((3, 16, 16))
        assert ssim(img, img) == pytest.approx(1.0, abs=1e-12)

    def test_constant_images_closed_form(self):
        # luminance term only: (2*0.2*0.8 + 1e-4) / (0.04 + 0.64 + 1e-4)
        a = np.full((3, 16, 16), 0.2)
        b = np.full((3, 16, 16), 0.8)
        expected = (2 * 0.2 * 0.8 + 1e-4) / (0.04 + 0.64 + 1e-4)
        assert ssim(a, b) == pytest.approx(expected, abs=1e-12)
        assert expected == pytest.approx(0.4706, abs=1e-4)

    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(3)
        a = rng.random((14, 15))
        b = np.clip(a + 0.1 * rng.standard_normal(a.shape), 0, 1)
        ref = naive_ssim(a, b, gaussian_window())
        assert ssim(a, b) == pytest.approx(ref, abs=1e-6)

    def test_symmetry(self):
        rng = np.random.default_rng(4)
        a = rng.random((3, 12, 12))
        b = rng.random((3, 12, 12))
        assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-9)

    def test_too_small_rejected(self):
        with pytest.raises(ValueError):
            ssim(np.zeros((3, 8, 8)), np.zeros((3, 8, 8)))

    def test_gaussian_window_normalized(self):
        win = gaussian_window()
        assert win.shape == (11, 11)
        assert win.sum() == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(win, win.T)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_ssim_self_score_is_one(seed):
    img = np.random.default_rng(seed).random((12, 13))
    assert ssim(img, img) == pytest.approx(1.0, abs=1e-10)
