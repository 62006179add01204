"""Training data: HR image sources, dihedral augmentation, patch batches.

A dataset spec is either "synth:<count>x<size>" (procedural images) or a
directory containing HR/*.ppm. LR inputs are always derived on the fly by
bicubic-downscaling the HR patch, after augmentation, so the degradation
model is fixed and consistent with evaluation.
"""
from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from .errors import ConfigError, UsageError
from .ppm import read_ppm
from .resize import downscale_rgb
from .synth import FAMILIES, synth_dataset

_SYNTH_RE = re.compile(r"^synth:(\d+)x(\d+)(?::([a-z,]+))?$")


def load_hr_images(spec: str, seed: int = 0) -> list[np.ndarray]:
    """Resolve a dataset spec to a list of (h, w, 3) uint8 HR images."""
    m = _SYNTH_RE.match(spec)
    if m:
        count, size = int(m.group(1)), int(m.group(2))
        families = tuple(m.group(3).split(",")) if m.group(3) else FAMILIES
        return synth_dataset(count, seed=seed, size=size, families=families)
    root = Path(spec)
    hr_dir = root / "HR"
    if not hr_dir.is_dir():
        raise UsageError(
            f"dataset {spec!r} is neither 'synth:<count>x<size>' nor a directory with HR/"
        )
    paths = sorted(hr_dir.glob("*.ppm"))
    if not paths:
        raise UsageError(f"no .ppm files under {hr_dir}")
    return [read_ppm(p).pixels for p in paths]


def dihedral(img: np.ndarray, k: int) -> np.ndarray:
    """One of the 8 axis-aligned flips/rotations; k=0 is identity."""
    if not 0 <= k < 8:
        raise ConfigError(f"dihedral index must be 0..7, got {k}")
    out = np.rot90(img, k % 4, axes=(0, 1))
    if k >= 4:
        out = out[:, ::-1]
    return np.ascontiguousarray(out)


def to_chw_float(img: np.ndarray, dtype) -> np.ndarray:
    """(h, w, 3) uint8 -> (3, h, w) float in [0, 1]."""
    return (img.astype(np.float64) / 255.0).transpose(2, 0, 1).astype(dtype)


def from_chw_float(arr: np.ndarray) -> np.ndarray:
    """(3, h, w) float in [0, 1] -> (h, w, 3) uint8, clamped and rounded."""
    clipped = np.clip(arr, 0.0, 1.0) * 255.0
    return np.rint(clipped).transpose(1, 2, 0).astype(np.uint8)


def sample_batch(
    rng: np.random.Generator,
    hr_images: list[np.ndarray],
    batch: int,
    lr_patch: int,
    scale: int,
    augment: bool = True,
    dtype=np.float32,
) -> tuple[np.ndarray, np.ndarray]:
    """Random aligned (LR, HR) patch batch: (b,3,p,p) and (b,3,p*s,p*s).

    RNG consumption is a fixed function of the arguments, which keeps
    checkpoint resume bitwise-faithful.
    """
    hp = lr_patch * scale
    lr = np.empty((batch, 3, lr_patch, lr_patch), dtype=dtype)
    hr = np.empty((batch, 3, hp, hp), dtype=dtype)
    for i in range(batch):
        img = hr_images[int(rng.integers(len(hr_images)))]
        h, w = img.shape[:2]
        if h < hp or w < hp:
            raise ConfigError(
                f"HR image {h}x{w} smaller than HR patch {hp} (lr_patch*scale)"
            )
        y0 = int(rng.integers(h - hp + 1))
        x0 = int(rng.integers(w - hp + 1))
        patch = img[y0 : y0 + hp, x0 : x0 + hp]
        if augment:
            patch = dihedral(patch, int(rng.integers(8)))
        hr[i] = to_chw_float(patch, dtype)
        lr[i] = to_chw_float(downscale_rgb(patch, scale), dtype)
    return lr, hr
