"""Separable bicubic resampling (Catmull-Rom, a = -0.5).

Sample positions follow the half-pixel center convention
src = (dst + 0.5) * (in / out) - 0.5, taps outside the image clamp to the
edge, and no antialiasing prefilter is applied in either direction - the
same 4-tap kernel serves both upscaling and downscaling, which is the
convention the training pipeline and metrics assume.
"""
from __future__ import annotations

import numpy as np

from .errors import ConfigError

_A = -0.5


def _cubic(t: np.ndarray) -> np.ndarray:
    """Kernel weight at distance t >= 0."""
    t2 = t * t
    t3 = t2 * t
    near = (_A + 2.0) * t3 - (_A + 3.0) * t2 + 1.0
    far = _A * t3 - 5.0 * _A * t2 + 8.0 * _A * t - 4.0 * _A
    return np.where(t <= 1.0, near, np.where(t < 2.0, far, 0.0))


def _axis_taps(n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray]:
    """Clamped tap indices (n_out, 4) and weights (n_out, 4) for one axis."""
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    base = np.floor(src).astype(np.int64)
    t = src - base
    taps = np.stack([base - 1, base, base + 1, base + 2], axis=1)
    dist = np.abs(src[:, None] - taps)
    weights = _cubic(dist)
    return np.clip(taps, 0, n_in - 1), weights


def resize_plane(plane: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize one (h, w) plane; computation in float64, dtype preserved."""
    if plane.ndim != 2:
        raise ConfigError(f"resize_plane expects (h, w), got {plane.shape}")
    if out_h < 1 or out_w < 1:
        raise ConfigError(f"bad output size {out_h}x{out_w}")
    p = plane.astype(np.float64)
    iy, wy = _axis_taps(plane.shape[0], out_h)
    ix, wx = _axis_taps(plane.shape[1], out_w)
    tmp = np.einsum("okw,ok->ow", p[iy, :], wy, optimize=True)
    out = np.einsum("hok,ok->ho", tmp[:, ix], wx, optimize=True)
    return out.astype(plane.dtype) if plane.dtype != np.float64 else out


def resize_rgb(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize (h, w, 3) uint8; channels resampled independently, rounded."""
    if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
        raise ConfigError(f"resize_rgb expects (h, w, 3) uint8, got {img.shape} {img.dtype}")
    out = np.empty((out_h, out_w, 3), dtype=np.uint8)
    for ch in range(3):
        plane = resize_plane(img[:, :, ch].astype(np.float64), out_h, out_w)
        out[:, :, ch] = np.clip(np.rint(plane), 0, 255).astype(np.uint8)
    return out


def downscale_rgb(img: np.ndarray, scale: int) -> np.ndarray:
    """Integer-factor downscale; input dims must be divisible by scale."""
    h, w = img.shape[:2]
    if h % scale or w % scale:
        raise ConfigError(f"image {h}x{w} not divisible by scale {scale}")
    return resize_rgb(img, h // scale, w // scale)


def upscale_rgb(img: np.ndarray, scale: int) -> np.ndarray:
    h, w = img.shape[:2]
    return resize_rgb(img, h * scale, w * scale)
