"""Procedural RGB test images: deterministic, structured, and varied.

Four families, each fully determined by (family, seed, size): oriented
sinusoid stripes, axis-aligned checkerboards, smooth Gaussian blobs, and a
mixed composite. Stripes and checkers carry energy above the Nyquist rate of
a 2x downscale, so plain interpolation visibly underperforms on them; blobs
are smooth and easy. Together they make small overfit datasets that separate
a learned upscaler from bicubic.
"""
from __future__ import annotations

import numpy as np

from .errors import ConfigError

FAMILIES = ("stripes", "checker", "blobs", "mixed")


def _palette(rng: np.random.Generator, n: int = 2) -> np.ndarray:
    """n well-separated colors in [30, 225] to avoid clipping artifacts."""
    cols = rng.uniform(30.0, 225.0, size=(n, 3))
    while n >= 2 and np.abs(cols[0] - cols[1]).max() < 60.0:
        cols[1] = rng.uniform(30.0, 225.0, size=3)
    return cols


def _grid(h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    return np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")


def _stripes(rng, h, w) -> np.ndarray:
    # wavelengths straddle the Nyquist rate of a 2x downscale, so plain
    # interpolation blurs or aliases them while the pattern stays regular
    yy, xx = _grid(h, w)
    theta = rng.uniform(0.0, np.pi)
    wavelen = rng.uniform(3.2, 6.5)
    phase = rng.uniform(0.0, 2 * np.pi)
    s = np.sin(2 * np.pi * (np.cos(theta) * xx + np.sin(theta) * yy) / wavelen + phase)
    c0, c1 = _palette(rng)
    mix = (s[..., None] + 1.0) / 2.0
    return c0 + mix * (c1 - c0)


def _checker(rng, h, w) -> np.ndarray:
    cy = int(rng.integers(2, 5))
    cx = int(rng.integers(2, 5))
    oy = int(rng.integers(0, cy))
    ox = int(rng.integers(0, cx))
    yy, xx = _grid(h, w)
    pattern = (((yy + oy) // cy + (xx + ox) // cx) % 2)[..., None]
    c0, c1 = _palette(rng)
    return c0 + pattern * (c1 - c0)


def _blobs(rng, h, w) -> np.ndarray:
    yy, xx = _grid(h, w)
    img = np.ones((h, w, 3)) * rng.uniform(60.0, 190.0, size=3)
    for _ in range(int(rng.integers(5, 9))):
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        sig = rng.uniform(4.0, 12.0)
        amp = rng.uniform(-80.0, 80.0, size=3)
        bump = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sig * sig))
        img += bump[..., None] * amp
    return img


def _mixed(rng, h, w) -> np.ndarray:
    img = _blobs(rng, h, w)
    yy, xx = _grid(h, w)
    # stripe field blended in through a soft diagonal boundary
    theta = rng.uniform(0.0, np.pi)
    edge = np.cos(theta) * (xx - w / 2) + np.sin(theta) * (yy - h / 2)
    mask = 1.0 / (1.0 + np.exp(-edge / 3.0))
    img = img * (1 - mask[..., None]) + _stripes(rng, h, w) * mask[..., None]
    # one hard-edged checker patch
    ph, pw = int(rng.integers(h // 4, h // 2)), int(rng.integers(w // 4, w // 2))
    y0, x0 = int(rng.integers(0, h - ph)), int(rng.integers(0, w - pw))
    img[y0 : y0 + ph, x0 : x0 + pw] = _checker(rng, ph, pw)
    return img


_MAKERS = {"stripes": _stripes, "checker": _checker, "blobs": _blobs, "mixed": _mixed}
_FAMILY_SALT = {"stripes": 11, "checker": 23, "blobs": 37, "mixed": 53}


def synth_image(family: str, seed: int, h: int = 64, w: int = 64) -> np.ndarray:
    """Deterministic (h, w, 3) uint8 image for (family, seed, size)."""
    if family not in _MAKERS:
        raise ConfigError(f"unknown family {family!r}; expected one of {FAMILIES}")
    if h < 8 or w < 8:
        raise ConfigError(f"image size {h}x{w} too small")
    if seed < 0:
        raise ConfigError(f"seed must be >= 0, got {seed}")
    rng = np.random.default_rng(np.random.SeedSequence([_FAMILY_SALT[family], seed]))
    img = _MAKERS[family](rng, h, w)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def synth_dataset(
    count: int, seed: int = 0, size: int = 64, families: tuple[str, ...] = FAMILIES
) -> list[np.ndarray]:
    """Images cycling through `families`, seeds derived from (seed, index)."""
    for f in families:
        if f not in _MAKERS:
            raise ConfigError(f"unknown family {f!r}")
    return [
        synth_image(families[i % len(families)], seed * 100003 + i, size, size)
        for i in range(count)
    ]
