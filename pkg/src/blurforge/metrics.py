"""PSNR and SSIM, the two quality metrics used for all comparisons."""

from __future__ import annotations

import math

import numpy as np

from .errors import ArgumentError
from .imgcore import Image, luma

SSIM_SIGMA = 1.5
SSIM_RADIUS = 5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def psnr(a: Image, b: Image, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB over all samples jointly.

    Identical images return math.inf as the sentinel.
    """
    if a.shape != b.shape:
        raise ArgumentError(f"image shapes differ: {a.shape} vs {b.shape}")
    mse = float(np.mean((a.data - b.data) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def _gaussian_window(radius: int, sigma: float) -> np.ndarray:
    coords = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-(coords**2) / (2.0 * sigma * sigma))
    kernel = np.outer(g, g)
    return kernel / kernel.sum()


def ssim(
    a: Image,
    b: Image,
    sigma: float = SSIM_SIGMA,
    radius: int = SSIM_RADIUS,
    k1: float = SSIM_K1,
    k2: float = SSIM_K2,
    peak: float = 1.0,
) -> float:
    """Mean structural similarity over luma, valid windows only (no padding)."""
    if a.shape != b.shape:
        raise ArgumentError(f"image shapes differ: {a.shape} vs {b.shape}")
    window = 2 * radius + 1
    if min(a.width, a.height) < window:
        raise ArgumentError(
            f"image min dimension {min(a.width, a.height)} smaller than SSIM window {window}"
        )
    x = luma(a)
    y = luma(b)
    kernel = _gaussian_window(radius, sigma)

    def filt(img2d):
        windows = np.lib.stride_tricks.sliding_window_view(img2d, (window, window))
        return np.einsum("ijkl,kl->ij", windows, kernel)

    mu_x = filt(x)
    mu_y = filt(y)
    xx = filt(x * x) - mu_x * mu_x
    yy = filt(y * y) - mu_y * mu_y
    xy = filt(x * y) - mu_x * mu_y
    c1 = (k1 * peak) ** 2
    c2 = (k2 * peak) ** 2
    ssim_map = ((2.0 * mu_x * mu_y + c1) * (2.0 * xy + c2)) / (
        (mu_x * mu_x + mu_y * mu_y + c1) * (xx + yy + c2)
    )
    return float(np.mean(ssim_map))
