"""Differentiable operations over NCHW tensors.

Conventions:
  - activations are (n, c, h, w); 1x1 convolutions and batched matmuls are
    routed through BLAS (np.matmul) rather than generic im2col;
  - spatial kernels must be odd so "same" padding is symmetric;
  - backward closures recompute cheap layouts (im2col views) instead of
    caching them, keeping tape memory at one array per op output.
"""
from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, DimensionError
from .tensor import Tensor

_GELU_C0 = math.sqrt(2.0 / math.pi)
_GELU_C1 = 0.044715

PAD_MODES = ("zeros", "reflect", "circular")


def _check_same_dtype(*ts: Tensor):
    dt = ts[0].data.dtype
    for t in ts[1:]:
        if t.data.dtype != dt:
            raise DimensionError(
                f"mixed dtypes in op: {dt} vs {t.data.dtype}"
            )


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum g down to `shape`, undoing NumPy broadcasting."""
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# -- arithmetic ----------------------------------------------------------------


def add(x: Tensor, y: Tensor) -> Tensor:
    _check_same_dtype(x, y)
    out_data = x.data + y.data

    def backward(g):
        x.accumulate_grad(_unbroadcast(g, x.data.shape))
        y.accumulate_grad(_unbroadcast(g, y.data.shape))

    return Tensor._from_op(out_data, (x, y), backward, "add")


def sub(x: Tensor, y: Tensor) -> Tensor:
    _check_same_dtype(x, y)
    out_data = x.data - y.data

    def backward(g):
        x.accumulate_grad(_unbroadcast(g, x.data.shape))
        y.accumulate_grad(_unbroadcast(-g, y.data.shape))

    return Tensor._from_op(out_data, (x, y), backward, "sub")


def mul(x: Tensor, y: Tensor) -> Tensor:
    _check_same_dtype(x, y)
    xd, yd = x.data, y.data
    out_data = xd * yd

    def backward(g):
        x.accumulate_grad(_unbroadcast(g * yd, xd.shape))
        y.accumulate_grad(_unbroadcast(g * xd, yd.shape))

    return Tensor._from_op(out_data, (x, y), backward, "mul")


def scale(x: Tensor, s: float) -> Tensor:
    s = float(s)
    out_data = x.data * np.asarray(s, dtype=x.data.dtype)

    def backward(g):
        x.accumulate_grad(g * np.asarray(s, dtype=g.dtype))

    return Tensor._from_op(out_data, (x,), backward, "scale")


def exp(x: Tensor) -> Tensor:
    out_data = np.exp(x.data)

    def backward(g):
        x.accumulate_grad(g * out_data)

    return Tensor._from_op(out_data, (x,), backward, "exp")


def relu(x: Tensor) -> Tensor:
    out_data = np.maximum(x.data, 0)

    def backward(g):
        # subgradient 0 at the tie point
        x.accumulate_grad(g * (x.data > 0))

    return Tensor._from_op(out_data, (x,), backward, "relu")


def gelu(x: Tensor) -> Tensor:
    """Tanh-approximation GELU: 0.5*x*(1 + tanh(c0*(x + c1*x^3)))."""
    xd = x.data
    u = _GELU_C0 * (xd + _GELU_C1 * xd * xd * xd)
    th = np.tanh(u)
    out_data = 0.5 * xd * (1.0 + th)

    def backward(g):
        du = _GELU_C0 * (1.0 + 3.0 * _GELU_C1 * xd * xd)
        d = 0.5 * (1.0 + th) + 0.5 * xd * (1.0 - th * th) * du
        x.accumulate_grad(g * d)

    return Tensor._from_op(out_data, (x,), backward, "gelu")


def abs_(x: Tensor) -> Tensor:
    out_data = np.abs(x.data)

    def backward(g):
        x.accumulate_grad(g * np.sign(x.data))

    return Tensor._from_op(out_data, (x,), backward, "abs")


def sum_all(x: Tensor) -> Tensor:
    out_data = np.asarray(x.data.sum(), dtype=x.data.dtype)

    def backward(g):
        x.accumulate_grad(np.broadcast_to(g, x.data.shape).copy())

    return Tensor._from_op(out_data, (x,), backward, "sum_all")


def mean_all(x: Tensor) -> Tensor:
    n = x.data.size
    out_data = np.asarray(x.data.mean(), dtype=x.data.dtype)

    def backward(g):
        x.accumulate_grad(np.broadcast_to(g / n, x.data.shape).astype(x.data.dtype))

    return Tensor._from_op(out_data, (x,), backward, "mean_all")


def softmax_lastdim(x: Tensor) -> Tensor:
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    out_data = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        dot = (g * out_data).sum(axis=-1, keepdims=True)
        x.accumulate_grad(out_data * (g - dot))

    return Tensor._from_op(out_data, (x,), backward, "softmax")


# -- structure -----------------------------------------------------------------


def reshape(x: Tensor, shape) -> Tensor:
    out_data = x.data.reshape(shape)

    def backward(g):
        x.accumulate_grad(g.reshape(x.data.shape))

    return Tensor._from_op(out_data, (x,), backward, "reshape")


def transpose_last2(x: Tensor) -> Tensor:
    out_data = np.swapaxes(x.data, -1, -2)

    def backward(g):
        x.accumulate_grad(np.swapaxes(g, -1, -2))

    return Tensor._from_op(out_data, (x,), backward, "transpose")


def permute(x: Tensor, axes: tuple[int, ...]) -> Tensor:
    if sorted(axes) != list(range(x.data.ndim)):
        raise DimensionError(f"bad permutation {axes} for rank {x.data.ndim}")
    inv = np.argsort(axes)
    out_data = np.ascontiguousarray(x.data.transpose(axes))

    def backward(g):
        x.accumulate_grad(np.ascontiguousarray(g.transpose(inv)))

    return Tensor._from_op(out_data, (x,), backward, "permute")


def split_channels(x: Tensor, parts: int) -> tuple[Tensor, ...]:
    n, c = x.data.shape[:2]
    if c % parts:
        raise DimensionError(f"cannot split {c} channels into {parts} parts")
    cs = c // parts
    outs = []
    for i in range(parts):
        lo = i * cs

        def backward(g, lo=lo):
            full = np.zeros_like(x.data)
            full[:, lo : lo + cs] = g
            x.accumulate_grad(full)

        outs.append(
            Tensor._from_op(
                np.ascontiguousarray(x.data[:, lo : lo + cs]),
                (x,),
                backward,
                "split",
            )
        )
    return tuple(outs)


def pad2d(x: Tensor, ph: int, pw: int, mode: str = "zeros") -> Tensor:
    """Pad the two trailing spatial axes by (ph, pw) on each side."""
    if mode not in PAD_MODES:
        raise ConfigError(f"unknown pad mode {mode!r}; expected one of {PAD_MODES}")
    if ph < 0 or pw < 0:
        raise ConfigError("negative padding")
    if ph == 0 and pw == 0:
        return x
    h, w = x.data.shape[-2:]
    if mode != "zeros" and (ph >= h or pw >= w):
        raise DimensionError(
            f"{mode} padding ({ph},{pw}) needs input larger than the margin, got {h}x{w}"
        )
    np_mode = {"zeros": "constant", "reflect": "reflect", "circular": "wrap"}[mode]
    width = [(0, 0)] * (x.data.ndim - 2) + [(ph, ph), (pw, pw)]
    out_data = np.pad(x.data, width, mode=np_mode)

    def fold(g, axis, p, size):
        """Collapse one padded axis back to `size`, routing margins by mode."""
        core = np.take(g, range(p, p + size), axis=axis).copy()
        if p == 0:
            return core
        lead = np.take(g, range(0, p), axis=axis)
        trail = np.take(g, range(p + size, p + size + p), axis=axis)
        idx = [slice(None)] * g.ndim
        if mode == "circular":
            idx[axis] = slice(size - p, size)
            core[tuple(idx)] += lead
            idx[axis] = slice(0, p)
            core[tuple(idx)] += trail
        else:  # reflect: padded cell j<p mirrors to p-j, trailing mirrors back
            idx[axis] = slice(1, p + 1)
            core[tuple(idx)] += np.flip(lead, axis=axis)
            idx[axis] = slice(size - 1 - p, size - 1)
            core[tuple(idx)] += np.flip(trail, axis=axis)
        return core

    def backward(g):
        if mode == "zeros":
            x.accumulate_grad(g[..., ph : ph + h, pw : pw + w])
            return
        g = fold(g, g.ndim - 2, ph, h)
        g = fold(g, g.ndim - 1, pw, w)
        x.accumulate_grad(g)

    return Tensor._from_op(out_data, (x,), backward, f"pad2d[{mode}]")


def pixel_shuffle(x: Tensor, r: int) -> Tensor:
    """(n, c*r^2, h, w) -> (n, c, h*r, w*r), inverse of pixel_unshuffle."""
    n, crr, h, w = x.data.shape
    if r < 1 or crr % (r * r):
        raise DimensionError(f"channels {crr} not divisible by r^2={r * r}")
    c = crr // (r * r)
    out_data = (
        x.data.reshape(n, c, r, r, h, w)
        .transpose(0, 1, 4, 2, 5, 3)
        .reshape(n, c, h * r, w * r)
    )

    def backward(g):
        x.accumulate_grad(_unshuffle_data(g, r))

    return Tensor._from_op(np.ascontiguousarray(out_data), (x,), backward, "pixel_shuffle")


def _unshuffle_data(d: np.ndarray, r: int) -> np.ndarray:
    n, c, hr, wr = d.shape
    h, w = hr // r, wr // r
    return np.ascontiguousarray(
        d.reshape(n, c, h, r, w, r).transpose(0, 1, 3, 5, 2, 4).reshape(n, c * r * r, h, w)
    )


def pixel_unshuffle(x: Tensor, r: int) -> Tensor:
    n, c, hr, wr = x.data.shape
    if r < 1 or hr % r or wr % r:
        raise DimensionError(f"spatial dims ({hr},{wr}) not divisible by r={r}")
    h, w = hr // r, wr // r
    out_data = _unshuffle_data(x.data, r)

    def backward(g):
        gs = (
            g.reshape(n, c, r, r, h, w)
            .transpose(0, 1, 4, 2, 5, 3)
            .reshape(n, c, hr, wr)
        )
        x.accumulate_grad(np.ascontiguousarray(gs))

    return Tensor._from_op(out_data, (x,), backward, "pixel_unshuffle")


def batched_matmul(a: Tensor, b: Tensor) -> Tensor:
    """(B, m, k) @ (B, k, n) -> (B, m, n)."""
    _check_same_dtype(a, b)
    if a.data.ndim != 3 or b.data.ndim != 3:
        raise DimensionError("batched_matmul expects rank-3 operands")
    if a.data.shape[0] != b.data.shape[0] or a.data.shape[2] != b.data.shape[1]:
        raise DimensionError(
            f"batched_matmul shapes {a.data.shape} x {b.data.shape}"
        )
    out_data = np.matmul(a.data, b.data)

    def backward(g):
        a.accumulate_grad(np.matmul(g, np.swapaxes(b.data, 1, 2)))
        b.accumulate_grad(np.matmul(np.swapaxes(a.data, 1, 2), g))

    return Tensor._from_op(out_data, (a, b), backward, "batched_matmul")


# -- convolution ---------------------------------------------------------------


def _im2col(xd: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """(n,c,h,w) -> (n*oh*ow, c*kh*kw) patch matrix, C-ordered per patch."""
    win = sliding_window_view(xd, (kh, kw), axis=(2, 3))
    if stride > 1:
        win = win[:, :, ::stride, ::stride]
    n, c, oh, ow = win.shape[:4]
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * kh * kw), (oh, ow)


def _raw_conv_valid(xd: np.ndarray, wd: np.ndarray, stride: int = 1) -> np.ndarray:
    """Valid cross-correlation, no groups. wd: (cout, cin, kh, kw)."""
    n, cin, h, w = xd.shape
    cout, _, kh, kw = wd.shape
    if kh == 1 and kw == 1:
        xs = xd[:, :, ::stride, ::stride] if stride > 1 else xd
        oh, ow = xs.shape[2], xs.shape[3]
        out = np.matmul(wd.reshape(cout, cin), xs.reshape(n, cin, oh * ow))
        return out.reshape(n, cout, oh, ow)
    cols, (oh, ow) = _im2col(xd, kh, kw, stride)
    out = cols @ wd.reshape(cout, -1).T
    return out.reshape(n, oh, ow, cout).transpose(0, 3, 1, 2)


def _dilate(g: np.ndarray, s: int) -> np.ndarray:
    if s == 1:
        return g
    n, c, oh, ow = g.shape
    out = np.zeros((n, c, (oh - 1) * s + 1, (ow - 1) * s + 1), dtype=g.dtype)
    out[:, :, ::s, ::s] = g
    return out


def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Tensor | None = None,
    stride: int = 1,
    padding: int = 0,
    pad_mode: str = "zeros",
    groups: int = 1,
) -> Tensor:
    """2D cross-correlation. weight: (cout, cin/groups, kh, kw)."""
    _check_same_dtype(x, weight, *([bias] if bias is not None else []))
    if x.data.ndim != 4 or weight.data.ndim != 4:
        raise DimensionError("conv2d expects rank-4 input and weight")
    cout, cg, kh, kw = weight.data.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise ConfigError(f"kernel dims must be odd, got {kh}x{kw}")
    if stride < 1:
        raise ConfigError(f"stride must be >= 1, got {stride}")
    if groups < 1 or cout % groups:
        raise DimensionError(f"cout={cout} not divisible by groups={groups}")
    if x.data.shape[1] != cg * groups:
        raise DimensionError(
            f"input channels {x.data.shape[1]} != {cg}*groups({groups})"
        )
    if bias is not None and bias.data.shape != (cout,):
        raise DimensionError(f"bias shape {bias.data.shape} != ({cout},)")
    if padding:
        x = pad2d(x, padding, padding, pad_mode)
    if x.data.shape[2] < kh or x.data.shape[3] < kw:
        raise DimensionError(
            f"input {x.data.shape[2]}x{x.data.shape[3]} smaller than kernel {kh}x{kw}"
        )
    return _conv2d_valid(x, weight, bias, stride, groups)


def _conv2d_valid(x, weight, bias, stride, groups):
    xd, wd = x.data, weight.data
    n, cin, h, w = xd.shape
    cout, cg, kh, kw = wd.shape
    cog = cout // groups
    if groups == 1:
        out_data = _raw_conv_valid(xd, wd, stride)
    else:
        parts = [
            _raw_conv_valid(xd[:, g * cg : (g + 1) * cg], wd[g * cog : (g + 1) * cog], stride)
            for g in range(groups)
        ]
        out_data = np.concatenate(parts, axis=1)
    if bias is not None:
        out_data = out_data + bias.data.reshape(1, cout, 1, 1)
    oh, ow = out_data.shape[2], out_data.shape[3]

    def backward(g):
        if bias is not None and bias.requires_grad:
            bias.accumulate_grad(g.sum(axis=(0, 2, 3)))
        gw = np.zeros_like(wd) if weight.requires_grad else None
        gx = np.zeros_like(xd) if x.requires_grad else None
        for gi in range(groups):
            xs = xd[:, gi * cg : (gi + 1) * cg]
            ws = wd[gi * cog : (gi + 1) * cog]
            gs = g[:, gi * cog : (gi + 1) * cog]
            if gw is not None:
                if kh == 1 and kw == 1:
                    xss = xs[:, :, ::stride, ::stride] if stride > 1 else xs
                    go_m = gs.transpose(1, 0, 2, 3).reshape(cog, -1)
                    x_m = xss.transpose(1, 0, 2, 3).reshape(cg, -1)
                    gw[gi * cog : (gi + 1) * cog] = (go_m @ x_m.T).reshape(cog, cg, 1, 1)
                else:
                    cols, _ = _im2col(xs, kh, kw, stride)
                    go_m = gs.transpose(0, 2, 3, 1).reshape(-1, cog)
                    gw[gi * cog : (gi + 1) * cog] = (go_m.T @ cols).reshape(cog, cg, kh, kw)
            if gx is not None:
                if kh == 1 and kw == 1 and stride == 1:
                    part = np.matmul(ws.reshape(cog, cg).T, gs.reshape(n, cog, oh * ow))
                    gx[:, gi * cg : (gi + 1) * cg] += part.reshape(n, cg, oh, ow)
                else:
                    gd = _dilate(gs, stride)
                    # pad so the transposed conv covers the full input extent
                    eh = h - (gd.shape[2] + kh - 1)
                    ew = w - (gd.shape[3] + kw - 1)
                    gp = np.pad(
                        gd,
                        ((0, 0), (0, 0), (kh - 1, kh - 1 + eh), (kw - 1, kw - 1 + ew)),
                    )
                    wf = ws[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
                    gx[:, gi * cg : (gi + 1) * cg] += _raw_conv_valid(
                        np.ascontiguousarray(gp), np.ascontiguousarray(wf)
                    )
        if gw is not None:
            weight.accumulate_grad(gw)
        if gx is not None:
            x.accumulate_grad(gx)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor._from_op(out_data, parents, backward, "conv2d")


def depthwise_conv2d(
    x: Tensor, weight: Tensor, bias: Tensor | None = None, pad_mode: str = "zeros"
) -> Tensor:
    """Per-channel same-size convolution. weight: (c, 1, kh, kw).

    Implemented as kh*kw shifted fused multiply-adds over the padded input,
    which beats im2col for the small kernels used here.
    """
    _check_same_dtype(x, weight, *([bias] if bias is not None else []))
    if weight.data.ndim != 4 or weight.data.shape[1] != 1:
        raise DimensionError(f"depthwise weight must be (c,1,kh,kw), got {weight.data.shape}")
    c = x.data.shape[1]
    if weight.data.shape[0] != c:
        raise DimensionError(f"weight channels {weight.data.shape[0]} != input {c}")
    kh, kw = weight.data.shape[2:]
    if kh % 2 == 0 or kw % 2 == 0:
        raise ConfigError(f"kernel dims must be odd, got {kh}x{kw}")
    if bias is not None and bias.data.shape != (c,):
        raise DimensionError(f"bias shape {bias.data.shape} != ({c},)")
    xp = pad2d(x, kh // 2, kw // 2, pad_mode)
    return _depthwise_valid(xp, weight, bias, kh, kw)


def _depthwise_valid(xp, weight, bias, kh, kw):
    # shift-and-accumulate: kh*kw fused passes beat im2col here because the
    # patch gather is strided while the shifted slices stream contiguously
    xpd, wd = xp.data, weight.data
    n, c, hp, wp = xpd.shape
    h, w = hp - kh + 1, wp - kw + 1
    out_data = np.zeros((n, c, h, w), dtype=xpd.dtype)
    for u in range(kh):
        for v in range(kw):
            out_data += wd[:, 0, u, v].reshape(1, c, 1, 1) * xpd[:, :, u : u + h, v : v + w]
    if bias is not None:
        out_data += bias.data.reshape(1, c, 1, 1)

    def backward(g):
        if bias is not None and bias.requires_grad:
            bias.accumulate_grad(g.sum(axis=(0, 2, 3)))
        if weight.requires_grad:
            gw = np.empty_like(wd)
            for u in range(kh):
                for v in range(kw):
                    gw[:, 0, u, v] = np.einsum(
                        "nchw,nchw->c", g, xpd[:, :, u : u + h, v : v + w], optimize=True
                    )
            weight.accumulate_grad(gw)
        if xp.requires_grad:
            gx = np.zeros_like(xpd)
            tmp = np.empty_like(g)
            for u in range(kh):
                for v in range(kw):
                    np.multiply(wd[:, 0, u, v].reshape(1, c, 1, 1), g, out=tmp)
                    gx[:, :, u : u + h, v : v + w] += tmp
            xp.accumulate_grad(gx)

    parents = (xp, weight) if bias is None else (xp, weight, bias)
    return Tensor._from_op(out_data, parents, backward, "depthwise_conv2d")


def layer_norm(x: Tensor, gain: Tensor, offset: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the channel axis of (n, c, h, w), per spatial site."""
    _check_same_dtype(x, gain, offset)
    if eps <= 0:
        raise ConfigError(f"layer_norm eps must be > 0, got {eps}")
    xd = x.data
    c = xd.shape[1]
    if gain.data.shape != (c,) or offset.data.shape != (c,):
        raise DimensionError(
            f"gain/offset must be ({c},), got {gain.data.shape}/{offset.data.shape}"
        )
    mu = xd.mean(axis=1, keepdims=True)
    xc = xd - mu
    var = np.mean(xc * xc, axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + np.asarray(eps, dtype=xd.dtype))
    xh = xc * inv
    out_data = xh * gain.data.reshape(1, c, 1, 1) + offset.data.reshape(1, c, 1, 1)

    def backward(g):
        if gain.requires_grad:
            gain.accumulate_grad((g * xh).sum(axis=(0, 2, 3)))
        if offset.requires_grad:
            offset.accumulate_grad(g.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            dxh = g * gain.data.reshape(1, c, 1, 1)
            m1 = dxh.mean(axis=1, keepdims=True)
            m2 = (dxh * xh).mean(axis=1, keepdims=True)
            x.accumulate_grad(inv * (dxh - m1 - xh * m2))

    return Tensor._from_op(out_data, (x, gain, offset), backward, "layer_norm")
