"""Luma conversion and reference quality metrics (PSNR, SSIM).

Metrics run on the BT.601 limited-range luma plane, the standard protocol
for super-resolution comparisons: Y = 16 + (65.481 R + 128.553 G + 24.966 B)
with RGB in [0, 1], so white maps to 235 and black to 16.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, DimensionError
from .ppm import ImageRGB8

PSNR_CAP_DB = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
_C1 = (0.01 * 255.0) ** 2
_C2 = (0.03 * 255.0) ** 2


def rgb_to_y(img: ImageRGB8 | np.ndarray) -> np.ndarray:
    """(h, w, 3) uint8 -> float32 luma plane in [0, 255]."""
    arr = img.pixels if isinstance(img, ImageRGB8) else np.asarray(img)
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.dtype != np.uint8:
        raise DimensionError(f"expected (h, w, 3) uint8, got {arr.shape} {arr.dtype}")
    rgb = arr.astype(np.float64) / 255.0
    y = 16.0 + 65.481 * rgb[:, :, 0] + 128.553 * rgb[:, :, 1] + 24.966 * rgb[:, :, 2]
    return np.clip(y, 0.0, 255.0).astype(np.float32)


def _check_pair(ref: np.ndarray, test: np.ndarray):
    if ref.shape != test.shape:
        raise DimensionError(f"plane shapes differ: {ref.shape} vs {test.shape}")
    if ref.ndim != 2:
        raise DimensionError(f"expected 2D planes, got rank {ref.ndim}")


def crop_border(plane: np.ndarray, border: int) -> np.ndarray:
    if border < 0:
        raise ConfigError(f"negative border {border}")
    if border == 0:
        return plane
    h, w = plane.shape
    if 2 * border >= h or 2 * border >= w:
        raise DimensionError(f"border {border} swallows the whole {h}x{w} plane")
    return plane[border : h - border, border : w - border]


def psnr(ref: np.ndarray, test: np.ndarray, border_crop: int = 0) -> float:
    """Peak signal-to-noise ratio in dB over [0, 255] planes, capped at 100."""
    _check_pair(ref, test)
    r = crop_border(ref, border_crop).astype(np.float64)
    t = crop_border(test, border_crop).astype(np.float64)
    mse = float(np.mean((r - t) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * np.log10(255.0**2 / mse))


def _gauss_kernel() -> np.ndarray:
    x = np.arange(SSIM_WINDOW, dtype=np.float64) - (SSIM_WINDOW - 1) / 2.0
    k = np.exp(-(x * x) / (2.0 * SSIM_SIGMA**2))
    return k / k.sum()


def _gauss_filter(p: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Valid-mode separable Gaussian: (h, w) -> (h-10, w-10)."""
    a = sliding_window_view(p, SSIM_WINDOW, axis=1) @ k
    return sliding_window_view(a, SSIM_WINDOW, axis=0) @ k


def ssim(ref: np.ndarray, test: np.ndarray) -> float:
    """Mean structural similarity, 11x11 Gaussian window (sigma 1.5), valid
    windows only, on [0, 255] planes."""
    _check_pair(ref, test)
    if ref.shape[0] < SSIM_WINDOW or ref.shape[1] < SSIM_WINDOW:
        raise DimensionError(f"plane {ref.shape} smaller than the {SSIM_WINDOW}px window")
    x = ref.astype(np.float64)
    y = test.astype(np.float64)
    k = _gauss_kernel()
    mx = _gauss_filter(x, k)
    my = _gauss_filter(y, k)
    sxx = _gauss_filter(x * x, k) - mx * mx
    syy = _gauss_filter(y * y, k) - my * my
    sxy = _gauss_filter(x * y, k) - mx * my
    num = (2.0 * mx * my + _C1) * (2.0 * sxy + _C2)
    den = (mx * mx + my * my + _C1) * (sxx + syy + _C2)
    return float(np.mean(num / den))
