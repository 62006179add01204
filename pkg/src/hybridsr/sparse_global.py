"""Global branch: sparse channel attention with learned per-head temperature.

Attention runs across channels rather than pixels: per head, a c' x c' score
matrix compares channel signatures over all spatial sites, so cost grows
linearly with resolution. Scores pass through ReLU instead of softmax, which
zeroes negative affinities and keeps the mixing matrix sparse; a softmax
variant is kept for ablation. Temperature is one learnable scalar per head,
stored as log_alpha so the applied divisor exp(log_alpha) stays positive.
"""
from __future__ import annotations

import numpy as np

from . import ops
from .errors import ConfigError, DimensionError, UsageError
from .layers import Conv2d, DepthwiseConv2d, LayerNorm, Module
from .tensor import Tensor, grad_enabled

ATTENTION_VARIANTS = ("relu", "softmax")


def channel_attention(
    q: Tensor,
    k: Tensor,
    v: Tensor,
    log_alpha: Tensor,
    heads: int,
    variant: str = "relu",
) -> Tensor:
    """Per-head channel-by-channel attention on NCHW maps.

    q, k, v: (n, c, h, w); log_alpha: (heads,). Heads are contiguous channel
    groups. Scores are QK^T / alpha over flattened spatial sites, activated by
    ReLU ("relu" variant) or row softmax ("softmax").
    """
    if variant not in ATTENTION_VARIANTS:
        raise ConfigError(f"unknown attention variant {variant!r}")
    n, c, h, w = q.data.shape
    if k.data.shape != q.data.shape or v.data.shape != q.data.shape:
        raise DimensionError("q, k, v must share one shape")
    if c % heads:
        raise DimensionError(f"channels {c} not divisible by heads {heads}")
    if log_alpha.data.shape != (heads,):
        raise DimensionError(f"log_alpha must be ({heads},), got {log_alpha.data.shape}")
    d = c // heads
    qf = ops.reshape(q, (n * heads, d, h * w))
    kf = ops.reshape(k, (n * heads, d, h * w))
    vf = ops.reshape(v, (n * heads, d, h * w))
    scores = ops.batched_matmul(qf, ops.transpose_last2(kf))
    inv_alpha = ops.reshape(ops.exp(ops.scale(log_alpha, -1.0)), (1, heads, 1, 1))
    scores = ops.mul(ops.reshape(scores, (n, heads, d, d)), inv_alpha)
    scores = ops.reshape(scores, (n * heads, d, d))
    gate = ops.relu(scores) if variant == "relu" else ops.softmax_lastdim(scores)
    out = ops.batched_matmul(gate, vf)
    return ops.reshape(out, (n, c, h, w))


class SparseChannelBlock(Module):
    """Pre-norm channel attention with residual, followed by a GatedFFN."""

    def __init__(
        self,
        channels: int,
        heads: int,
        ffn_expansion: float,
        rng,
        dtype=np.float32,
        variant: str = "relu",
    ):
        from .dynamic_local import GatedFFN  # shared FFN definition

        if channels % heads:
            raise ConfigError(f"channels {channels} not divisible by heads {heads}")
        if variant not in ATTENTION_VARIANTS:
            raise ConfigError(f"unknown attention variant {variant!r}")
        self.heads = heads
        self.variant = variant
        self.norm = LayerNorm(channels, dtype=dtype)
        self.qkv_point = Conv2d(channels, 3 * channels, 1, rng, dtype=dtype)
        self.qkv_depth = DepthwiseConv2d(3 * channels, 3, rng, dtype=dtype)
        self.log_alpha = Tensor(np.zeros(heads), requires_grad=True, dtype=dtype)
        self.project = Conv2d(channels, channels, 1, rng, dtype=dtype, init="zeros")
        self.ffn = GatedFFN(channels, ffn_expansion, rng, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        y = self.norm(x)
        qkv = self.qkv_depth(self.qkv_point(y))
        q, k, v = ops.split_channels(qkv, 3)
        att = channel_attention(q, k, v, self.log_alpha, self.heads, self.variant)
        x = ops.add(x, self.project(att))
        return self.ffn(x)


def _tile_starts(extent: int, win: int) -> list[int]:
    if extent <= win:
        return [0]
    starts = list(range(0, extent - win + 1, win))
    if starts[-1] != extent - win:
        starts.append(extent - win)  # border-anchored final tile; overlap averaged
    return starts


def tiled_forward(block: Module, x: Tensor, win: int) -> Tensor:
    """Run `block` independently on win x win tiles and average overlaps.

    Inference-only: global statistics (here, attention over all sites) are
    recomputed per tile so they match the training-patch distribution. The
    window shrinks only when the whole image is smaller than `win`; a single
    tile reproduces the untiled output exactly.
    """
    if win < 1:
        raise ConfigError(f"tile window must be >= 1, got {win}")
    if grad_enabled() and x.requires_grad:
        raise UsageError("tiled_forward is inference-only; wrap in no_grad()")
    n, c, h, w = x.data.shape
    ys = _tile_starts(h, win)
    xs = _tile_starts(w, win)
    if len(ys) == 1 and len(xs) == 1:
        return block(x)
    acc = np.zeros_like(x.data)
    cnt = np.zeros((1, 1, h, w), dtype=x.data.dtype)
    for y0 in ys:
        y1 = min(y0 + win, h)
        for x0 in xs:
            x1 = min(x0 + win, w)
            tile = Tensor(np.ascontiguousarray(x.data[:, :, y0:y1, x0:x1]))
            acc[:, :, y0:y1, x0:x1] += block(tile).data
            cnt[:, :, y0:y1, x0:x1] += 1
    return Tensor(acc / cnt)
