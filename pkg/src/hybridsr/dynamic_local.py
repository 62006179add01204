"""Local branch: per-pixel dynamic kernels, plus the shared gated FFN.

A small generator network (pointwise squeeze, 7x7 depthwise context,
pointwise expand) predicts one k x k kernel per spatial site and head.
Channels are split into `heads` contiguous groups; every channel in a group
is filtered with that group's per-site kernel. Unlike a regular convolution
the weights vary across the image, so edges and textures get kernels adapted
to the local neighborhood.
"""
from __future__ import annotations

import numpy as np

from . import ops
from .errors import ConfigError, DimensionError
from .layers import Conv2d, DepthwiseConv2d, LayerNorm, Module
from .tensor import Tensor

CONTEXT_KERNEL = 7  # receptive field of the kernel generator


def dynamic_local_aggregate(x: Tensor, kernels: Tensor) -> Tensor:
    """Apply per-site grouped kernels: out[n,c,y,x] = sum_t k[n,g(c),t,y,x] * pad(x)[...].

    x: (n, c, h, w); kernels: (n, heads, k*k, h, w) with c divisible by heads.
    Taps run row-major over the k x k window centered at each site, with zero
    padding at the borders.
    """
    n, c, h, w = x.data.shape
    kn, heads, kk, kh_, kw_ = kernels.data.shape
    if kn != n or kh_ != h or kw_ != w:
        raise DimensionError(
            f"kernel field {kernels.data.shape} does not match input {x.data.shape}"
        )
    k = int(round(kk**0.5))
    if k * k != kk or k % 2 == 0:
        raise DimensionError(f"taps {kk} is not an odd square kernel size")
    if c % heads:
        raise DimensionError(f"channels {c} not divisible by heads {heads}")
    return _aggregate(ops.pad2d(x, k // 2, k // 2, "zeros"), kernels, k, heads)


def _aggregate(xp: Tensor, kernels: Tensor, k: int, heads: int) -> Tensor:
    xpd, kd = xp.data, kernels.data
    n, c, hp, wp = xpd.shape
    h, w = hp - k + 1, wp - k + 1
    cg = c // heads
    xv = xpd.reshape(n, heads, cg, hp, wp)
    out = np.zeros((n, heads, cg, h, w), dtype=xpd.dtype)
    for u in range(k):
        for v in range(k):
            t = u * k + v
            out += kd[:, :, t, None] * xv[:, :, :, u : u + h, v : v + w]
    out_data = out.reshape(n, c, h, w)

    def backward(g):
        gv = g.reshape(n, heads, cg, h, w)
        if kernels.requires_grad:
            gk = np.empty_like(kd)
            for u in range(k):
                for v in range(k):
                    gk[:, :, u * k + v] = (
                        gv * xv[:, :, :, u : u + h, v : v + w]
                    ).sum(axis=2)
            kernels.accumulate_grad(gk)
        if xp.requires_grad:
            gx = np.zeros_like(xv)
            for u in range(k):
                for v in range(k):
                    gx[:, :, :, u : u + h, v : v + w] += kd[:, :, u * k + v, None] * gv
            xp.accumulate_grad(gx.reshape(n, c, hp, wp))

    return Tensor._from_op(out_data, (xp, kernels), backward, "dynamic_local_aggregate")


class GatedFFN(Module):
    """Gated feed-forward with depthwise mixing, pre-norm, residual.

    x + project(gelu(a) * b) where (a, b) are halves of a depthwise-convolved
    pointwise expansion of ln(x). The projection starts at zero so a fresh
    block is an identity map.
    """

    def __init__(self, channels: int, expansion: float, rng, dtype=np.float32):
        hidden = int(round(channels * expansion))
        if hidden < 1:
            raise ConfigError(f"ffn expansion {expansion} gives empty hidden layer")
        self.norm = LayerNorm(channels, dtype=dtype)
        self.expand = Conv2d(channels, 2 * hidden, 1, rng, dtype=dtype)
        self.mix = DepthwiseConv2d(2 * hidden, 3, rng, dtype=dtype)
        self.project = Conv2d(hidden, channels, 1, rng, dtype=dtype, init="zeros")

    def forward(self, x: Tensor) -> Tensor:
        y = self.mix(self.expand(self.norm(x)))
        a, b = ops.split_channels(y, 2)
        return ops.add(x, self.project(ops.mul(ops.gelu(a), b)))


class DynamicLocalBlock(Module):
    """Pre-norm dynamic local attention with residual, followed by a GatedFFN."""

    def __init__(
        self,
        channels: int,
        heads: int,
        kernel_size: int,
        squeeze_ratio: float,
        ffn_expansion: float,
        rng,
        dtype=np.float32,
    ):
        squeezed = channels * squeeze_ratio
        if abs(squeezed - round(squeezed)) > 1e-9 or round(squeezed) < 1:
            raise ConfigError(
                f"squeeze_ratio {squeeze_ratio} of {channels} channels is not a positive integer"
            )
        squeezed = int(round(squeezed))
        if kernel_size % 2 == 0 or kernel_size < 1:
            raise ConfigError(f"kernel_size must be odd and positive, got {kernel_size}")
        if channels % heads:
            raise ConfigError(f"channels {channels} not divisible by heads {heads}")
        self.heads = heads
        self.k = kernel_size
        self.norm = LayerNorm(channels, dtype=dtype)
        self.squeeze = Conv2d(channels, squeezed, 1, rng, dtype=dtype)
        self.context = DepthwiseConv2d(squeezed, CONTEXT_KERNEL, rng, dtype=dtype)
        # zero start: no aggregation contribution until the generator trains
        self.kernels = Conv2d(
            squeezed, heads * kernel_size * kernel_size, 1, rng, dtype=dtype, init="zeros"
        )
        self.ffn = GatedFFN(channels, ffn_expansion, rng, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        y = self.norm(x)
        field = self.kernels(self.context(self.squeeze(y)))
        n, _, h, w = field.data.shape
        field = ops.reshape(field, (n, self.heads, self.k * self.k, h, w))
        x = ops.add(x, dynamic_local_aggregate(y, field))
        return self.ffn(x)


class WindowedSpatialBlock(Module):
    """Plain windowed multi-head spatial self-attention (ablation stand-in).

    Softmax attention over non-overlapping win x win token windows; input
    spatial dims must be divisible by the window.
    """

    def __init__(
        self,
        channels: int,
        heads: int,
        ffn_expansion: float,
        rng,
        dtype=np.float32,
        window: int = 8,
    ):
        if channels % heads:
            raise ConfigError(f"channels {channels} not divisible by heads {heads}")
        self.heads = heads
        self.window = window
        self.norm = LayerNorm(channels, dtype=dtype)
        self.qkv = Conv2d(channels, 3 * channels, 1, rng, dtype=dtype)
        self.project = Conv2d(channels, channels, 1, rng, dtype=dtype, init="zeros")
        self.ffn = GatedFFN(channels, ffn_expansion, rng, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        n, c, h, w = x.data.shape
        win = self.window
        if h % win or w % win:
            raise DimensionError(
                f"spatial dims ({h},{w}) must be divisible by window {win}"
            )
        d = c // self.heads
        y = self.norm(x)
        qkv = self.qkv(y)

        def to_tokens(t: Tensor) -> Tensor:
            t = ops.reshape(t, (n, self.heads, d, h // win, win, w // win, win))
            t = ops.permute(t, (0, 3, 5, 1, 4, 6, 2))
            return ops.reshape(t, (n * (h // win) * (w // win) * self.heads, win * win, d))

        q, k, v = ops.split_channels(qkv, 3)
        qt, kt, vt = to_tokens(q), to_tokens(k), to_tokens(v)
        scores = ops.scale(ops.batched_matmul(qt, ops.transpose_last2(kt)), 1.0 / d**0.5)
        att = ops.batched_matmul(ops.softmax_lastdim(scores), vt)
        att = ops.reshape(att, (n, h // win, w // win, self.heads, win, win, d))
        att = ops.permute(att, (0, 3, 6, 1, 4, 2, 5))
        att = ops.reshape(att, (n, c, h, w))
        x = ops.add(x, self.project(att))
        return self.ffn(x)
