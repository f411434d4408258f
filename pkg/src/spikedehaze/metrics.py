"""Image quality metrics: PSNR on the [0, 1] scale and single-scale SSIM."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = ["psnr", "ssim", "gaussian_window", "PSNR_CAP",
           "SSIM_WINDOW", "SSIM_SIGMA", "SSIM_K1", "SSIM_K2"]

PSNR_CAP = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_RANGE = 1.0


def psnr(pred: np.ndarray, target: np.ndarray) -> float:
    """10*log10(1/MSE) after clamping both images to [0, 1]; capped at 100."""
    if pred.shape != target.shape:
        raise ValueError("psnr requires equal shapes")
    a = np.clip(np.asarray(pred, dtype=np.float64), 0.0, 1.0)
    b = np.clip(np.asarray(target, dtype=np.float64), 0.0, 1.0)
    mse = np.mean((a - b) ** 2)
    if mse == 0.0:
        return PSNR_CAP
    return min(float(10.0 * np.log10(1.0 / mse)), PSNR_CAP)


def gaussian_window(size: int = SSIM_WINDOW,
                    sigma: float = SSIM_SIGMA) -> np.ndarray:
    ax = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(ax ** 2) / (2.0 * sigma ** 2))
    win = np.outer(g, g)
    return win / win.sum()


def _to_gray(img: np.ndarray) -> np.ndarray:
    """Channel-mean grayscale from (C, H, W) or (H, W)."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr.mean(axis=0)
    if arr.ndim != 2:
        raise ValueError("expected a (C, H, W) or (H, W) image")
    return arr


def _windowed_mean(img: np.ndarray, win: np.ndarray) -> np.ndarray:
    v = sliding_window_view(img, win.shape)
    return np.einsum("hwij,ij->hw", v, win, optimize=True)


def ssim(pred: np.ndarray, target: np.ndarray) -> float:
    """Standard single-scale SSIM over valid Gaussian-window positions."""
    a = _to_gray(pred)
    b = _to_gray(target)
    if a.shape != b.shape:
        raise ValueError("ssim requires equal shapes")
    if min(a.shape) < SSIM_WINDOW:
        raise ValueError(f"images must be at least "
                         f"{SSIM_WINDOW}x{SSIM_WINDOW} for ssim")
    win = gaussian_window()
    c1 = (SSIM_K1 * SSIM_RANGE) ** 2
    c2 = (SSIM_K2 * SSIM_RANGE) ** 2
    mu_a = _windowed_mean(a, win)
    mu_b = _windowed_mean(b, win)
    var_a = _windowed_mean(a * a, win) - mu_a ** 2
    var_b = _windowed_mean(b * b, win) - mu_b ** 2
    cov = _windowed_mean(a * b, win) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))
