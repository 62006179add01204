"""Brute-force reference implementations used as oracles.

Everything here is written as plain per-element loops with none of the
vectorization, reshaping, or shared helpers of the package code, so agreement
is evidence of correctness rather than of shared bugs. Slow on purpose; only
run on tiny shapes.
"""
from __future__ import annotations

import math

import numpy as np


def ref_dynamic_aggregate(x: np.ndarray, kernels: np.ndarray) -> np.ndarray:
    """out[n,c,y,x] = sum over window taps of kernel[n, head(c), tap, y, x] * x.

    Taps run row-major over the k x k window centered at (y, x); samples
    outside the image contribute zero.
    """
    n, c, h, w = x.shape
    _, heads, kk, _, _ = kernels.shape
    k = int(round(math.sqrt(kk)))
    r = k // 2
    cg = c // heads
    out = np.zeros_like(x)
    for ni in range(n):
        for ci in range(c):
            hd = ci // cg
            for y in range(h):
                for xx in range(w):
                    acc = 0.0
                    for u in range(k):
                        for v in range(k):
                            sy, sx = y + u - r, xx + v - r
                            if 0 <= sy < h and 0 <= sx < w:
                                acc += float(kernels[ni, hd, u * k + v, y, xx]) * float(
                                    x[ni, ci, sy, sx]
                                )
                    out[ni, ci, y, xx] = acc
    return out


def ref_channel_attention(
    q: np.ndarray,
    k: np.ndarray,
    v: np.ndarray,
    log_alpha: np.ndarray,
    heads: int,
    variant: str,
) -> np.ndarray:
    """Per-head channel attention: scores QK^T / exp(log_alpha), relu or softmax."""
    n, c, h, w = q.shape
    d = c // heads
    hw = h * w
    out = np.zeros_like(q)
    for ni in range(n):
        for hd in range(heads):
            lo = hd * d
            qm = q[ni, lo : lo + d].reshape(d, hw)
            km = k[ni, lo : lo + d].reshape(d, hw)
            vm = v[ni, lo : lo + d].reshape(d, hw)
            scores = [[0.0] * d for _ in range(d)]
            for i in range(d):
                for j in range(d):
                    s = 0.0
                    for p in range(hw):
                        s += float(qm[i, p]) * float(km[j, p])
                    scores[i][j] = s / math.exp(float(log_alpha[hd]))
            if variant == "relu":
                gate = [[max(s, 0.0) for s in row] for row in scores]
            else:
                gate = []
                for row in scores:
                    m = max(row)
                    exps = [math.exp(s - m) for s in row]
                    z = sum(exps)
                    gate.append([e / z for e in exps])
            for i in range(d):
                for p in range(hw):
                    acc = 0.0
                    for j in range(d):
                        acc += gate[i][j] * float(vm[j, p])
                    out[ni, lo + i].reshape(hw)[p] = acc
    return out


def _ref_layer_norm(x, gain, offset, eps):
    n, c, h, w = x.shape
    out = np.zeros_like(x)
    for ni in range(n):
        for y in range(h):
            for xx in range(w):
                vals = [float(x[ni, ci, y, xx]) for ci in range(c)]
                mean = sum(vals) / c
                var = sum((v - mean) ** 2 for v in vals) / c
                inv = 1.0 / math.sqrt(var + eps)
                for ci in range(c):
                    out[ni, ci, y, xx] = (vals[ci] - mean) * inv * float(
                        gain[ci]
                    ) + float(offset[ci])
    return out


def _ref_conv1x1(x, w, b):
    n, cin, h, ww = x.shape
    cout = w.shape[0]
    out = np.zeros((n, cout, h, ww), dtype=x.dtype)
    for ni in range(n):
        for co in range(cout):
            for y in range(h):
                for xx in range(ww):
                    acc = float(b[co])
                    for ci in range(cin):
                        acc += float(w[co, ci, 0, 0]) * float(x[ni, ci, y, xx])
                    out[ni, co, y, xx] = acc
    return out


def _ref_depthwise(x, w, b):
    n, c, h, ww = x.shape
    k = w.shape[2]
    r = k // 2
    out = np.zeros_like(x)
    for ni in range(n):
        for ci in range(c):
            for y in range(h):
                for xx in range(ww):
                    acc = float(b[ci])
                    for u in range(k):
                        for v in range(k):
                            sy, sx = y + u - r, xx + v - r
                            if 0 <= sy < h and 0 <= sx < ww:
                                acc += float(w[ci, 0, u, v]) * float(x[ni, ci, sy, sx])
                    out[ni, ci, y, xx] = acc
    return out


def ref_gelu(t: float) -> float:
    return 0.5 * t * (1.0 + math.tanh(math.sqrt(2.0 / math.pi) * (t + 0.044715 * t**3)))


def ref_gated_ffn(
    x: np.ndarray,
    gain: np.ndarray,
    offset: np.ndarray,
    eps: float,
    w_expand: np.ndarray,
    b_expand: np.ndarray,
    w_mix: np.ndarray,
    b_mix: np.ndarray,
    w_project: np.ndarray,
    b_project: np.ndarray,
) -> np.ndarray:
    """x + project(gelu(a) * b) with (a, b) halves of depthwise(expand(ln(x)))."""
    y = _ref_layer_norm(x, gain, offset, eps)
    y = _ref_conv1x1(y, w_expand, b_expand)
    y = _ref_depthwise(y, w_mix, b_mix)
    hidden = y.shape[1] // 2
    a, b = y[:, :hidden], y[:, hidden:]
    gated = np.zeros_like(a)
    for idx in np.ndindex(a.shape):
        gated[idx] = ref_gelu(float(a[idx])) * float(b[idx])
    return x + _ref_conv1x1(gated, w_project, b_project)


def _ref_cubic(t: float) -> float:
    a = -0.5
    t = abs(t)
    if t <= 1.0:
        return (a + 2.0) * t**3 - (a + 3.0) * t**2 + 1.0
    if t < 2.0:
        return a * t**3 - 5.0 * a * t**2 + 8.0 * a * t - 4.0 * a
    return 0.0


def ref_bicubic(plane: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Per-pixel 4x4-tap Catmull-Rom resample, half-pixel centers, edge clamp."""
    in_h, in_w = plane.shape
    out = np.zeros((out_h, out_w), dtype=np.float64)
    for oy in range(out_h):
        sy = (oy + 0.5) * (in_h / out_h) - 0.5
        by = math.floor(sy)
        for ox in range(out_w):
            sx = (ox + 0.5) * (in_w / out_w) - 0.5
            bx = math.floor(sx)
            acc = 0.0
            for m in range(-1, 3):
                wy = _ref_cubic(sy - (by + m))
                iy = min(max(by + m, 0), in_h - 1)
                for nn in range(-1, 3):
                    wx = _ref_cubic(sx - (bx + nn))
                    ix = min(max(bx + nn, 0), in_w - 1)
                    acc += wy * wx * float(plane[iy, ix])
            out[oy, ox] = acc
    return out.astype(plane.dtype) if plane.dtype != np.float64 else out


def ref_conv2d(x, w, b, stride=1, padding=0, groups=1):
    """Naive grouped convolution with zero padding, for unit tests."""
    n, cin, h, ww = x.shape
    cout, cin_g, kh, kw = w.shape
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (ww + 2 * padding - kw) // stride + 1
    og = cout // groups
    out = np.zeros((n, cout, oh, ow), dtype=x.dtype)
    for ni in range(n):
        for co in range(cout):
            g = co // og
            for oy in range(oh):
                for ox in range(ow):
                    acc = 0.0 if b is None else float(b[co])
                    for ci in range(cin_g):
                        for u in range(kh):
                            for v in range(kw):
                                sy = oy * stride + u - padding
                                sx = ox * stride + v - padding
                                if 0 <= sy < h and 0 <= sx < ww:
                                    acc += float(w[co, ci, u, v]) * float(
                                        x[ni, g * cin_g + ci, sy, sx]
                                    )
                    out[ni, co, oy, ox] = acc
    return out


def ref_psnr(a: np.ndarray, b: np.ndarray, cap: float = 100.0) -> float:
    diff = a.astype(np.float64) - b.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return cap
    return min(10.0 * math.log10(255.0**2 / mse), cap)


def ref_ssim(a: np.ndarray, b: np.ndarray, window: int = 11, sigma: float = 1.5) -> float:
    """Gaussian-weighted SSIM over valid windows, straight from the formula."""
    c1 = (0.01 * 255.0) ** 2
    c2 = (0.03 * 255.0) ** 2
    half = window // 2
    g = np.array(
        [math.exp(-((i - half) ** 2) / (2 * sigma**2)) for i in range(window)]
    )
    g /= g.sum()
    wgt = np.outer(g, g)
    h, w = a.shape
    scores = []
    for y in range(h - window + 1):
        for x in range(w - window + 1):
            pa = a[y : y + window, x : x + window].astype(np.float64)
            pb = b[y : y + window, x : x + window].astype(np.float64)
            mu_a = float((wgt * pa).sum())
            mu_b = float((wgt * pb).sum())
            var_a = float((wgt * pa * pa).sum()) - mu_a**2
            var_b = float((wgt * pb * pb).sum()) - mu_b**2
            cov = float((wgt * pa * pb).sum()) - mu_a * mu_b
            scores.append(
                ((2 * mu_a * mu_b + c1) * (2 * cov + c2))
                / ((mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2))
            )
    return float(np.mean(scores))


def ref_adam_step(p, g, m, v, t, lr, beta1, beta2, eps):
    """One Adam update on plain floats; returns (p, m, v)."""
    m = beta1 * m + (1 - beta1) * g
    v = beta2 * v + (1 - beta2) * g * g
    m_hat = m / (1 - beta1**t)
    v_hat = v / (1 - beta2**t)
    return p - lr * m_hat / (math.sqrt(v_hat) + eps), m, v
