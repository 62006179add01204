"""Inference helpers and evaluation protocol.

Protocol: HR reference is cropped to a multiple of the scale, LR is its
bicubic downscale, metrics are PSNR/SSIM on the BT.601 luma plane with a
border crop of `scale` pixels. The bicubic baseline runs the same protocol
with plain interpolation in place of the model.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import from_chw_float, to_chw_float
from .network import SRNetwork
from .quality import crop_border, psnr, rgb_to_y, ssim
from .resize import downscale_rgb, upscale_rgb
from .tensor import Tensor, no_grad

TLC_DEFAULT_WINDOW = 48


@dataclass
class EvalResult:
    psnr: float
    ssim: float
    per_image: list[dict]

    def __str__(self):
        return f"PSNR {self.psnr:.2f} dB / SSIM {self.ssim:.4f} ({len(self.per_image)} images)"


def upscale(model: SRNetwork, lr_img: np.ndarray, tlc_win: int | None = None) -> np.ndarray:
    """(h, w, 3) uint8 -> (h*s, w*s, 3) uint8 through the network."""
    dtype = model.head.w.data.dtype
    x = Tensor(to_chw_float(lr_img, dtype)[None])
    with no_grad():
        out = model(x, tlc_win=tlc_win)
    return from_chw_float(out.data[0])


def _crop_to_scale(img: np.ndarray, scale: int) -> np.ndarray:
    h, w = img.shape[:2]
    return img[: h - h % scale, : w - w % scale]


def _score(hr: np.ndarray, sr: np.ndarray, scale: int) -> tuple[float, float]:
    y_ref = rgb_to_y(hr)
    y_sr = rgb_to_y(sr)
    p = psnr(y_ref, y_sr, border_crop=scale)
    s = ssim(crop_border(y_ref, scale), crop_border(y_sr, scale))
    return p, s


def evaluate_images(
    model: SRNetwork,
    hr_images: list[np.ndarray],
    scale: int,
    tlc_win: int | None = None,
) -> EvalResult:
    rows = []
    for i, hr in enumerate(hr_images):
        hr = _crop_to_scale(hr, scale)
        lr = downscale_rgb(hr, scale)
        sr = upscale(model, lr, tlc_win=tlc_win)
        p, s = _score(hr, sr, scale)
        rows.append({"index": i, "psnr": p, "ssim": s})
    return _summarize(rows)


def bicubic_baseline(hr_images: list[np.ndarray], scale: int) -> EvalResult:
    rows = []
    for i, hr in enumerate(hr_images):
        hr = _crop_to_scale(hr, scale)
        sr = upscale_rgb(downscale_rgb(hr, scale), scale)
        p, s = _score(hr, sr, scale)
        rows.append({"index": i, "psnr": p, "ssim": s})
    return _summarize(rows)


def _summarize(rows: list[dict]) -> EvalResult:
    return EvalResult(
        psnr=float(np.mean([r["psnr"] for r in rows])),
        ssim=float(np.mean([r["ssim"] for r in rows])),
        per_image=rows,
    )
