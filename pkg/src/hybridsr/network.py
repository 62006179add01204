"""Network assembly: hybrid blocks, residual groups, and the SR model.

Layout: a 3x3 head lifts RGB to `channels` features; `num_groups` residual
groups each run `blocks_per_group` hybrid blocks (local dynamic-kernel
sub-block, then global channel-attention sub-block) plus a trailing 3x3 conv
inside a long residual; a global skip adds the head features back before the
3x3 tail projects to 3 * scale^2 channels for pixel shuffling.

Every residual branch ends in a zero conv, so a freshly built group stack is
an exact identity over features and training starts from near-bicubic output
statistics instead of noise.
"""
from __future__ import annotations

from dataclasses import dataclass, fields, replace

import numpy as np

from . import ops
from .dynamic_local import DynamicLocalBlock, WindowedSpatialBlock
from .errors import ConfigError
from .layers import Conv2d, Module
from .sparse_global import SparseChannelBlock, tiled_forward
from .tensor import Tensor

SCALES = (2, 3, 4)
BLOCK_MIXES = ("hybrid", "local_only", "global_only")
LOCAL_VARIANTS = ("mhdlsa", "mhsa")  # dynamic kernels vs windowed spatial MHSA


@dataclass
class ModelConfig:
    channels: int = 48
    num_groups: int = 3
    blocks_per_group: int = 3
    heads: int = 6
    scale: int = 4
    kernel_size: int = 3
    squeeze_ratio: float = 0.5
    ffn_expansion: float = 2.66
    attention_variant: str = "relu"
    local_variant: str = "mhdlsa"
    block_mix: str = "hybrid"

    def validate(self):
        if self.scale not in SCALES:
            raise ConfigError(f"scale must be one of {SCALES}, got {self.scale}")
        for name in ("channels", "num_groups", "blocks_per_group", "heads"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.channels % self.heads:
            raise ConfigError(
                f"channels {self.channels} not divisible by heads {self.heads}"
            )
        if self.kernel_size % 2 == 0 or self.kernel_size < 1:
            raise ConfigError(f"kernel_size must be odd, got {self.kernel_size}")
        sq = self.channels * self.squeeze_ratio
        if abs(sq - round(sq)) > 1e-9 or round(sq) < 1:
            raise ConfigError(
                f"squeeze_ratio {self.squeeze_ratio} of {self.channels} channels "
                "must give a positive integer"
            )
        if int(round(self.channels * self.ffn_expansion)) < 1:
            raise ConfigError(f"ffn_expansion {self.ffn_expansion} too small")
        if self.attention_variant not in ("relu", "softmax"):
            raise ConfigError(f"bad attention_variant {self.attention_variant!r}")
        if self.local_variant not in LOCAL_VARIANTS:
            raise ConfigError(f"bad local_variant {self.local_variant!r}")
        if self.block_mix not in BLOCK_MIXES:
            raise ConfigError(f"bad block_mix {self.block_mix!r}")
        return self

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown model config keys: {sorted(extra)}")
        return cls(**d).validate()


PRESETS = {
    "full": ModelConfig(channels=90, num_groups=6, blocks_per_group=4),
    "light": ModelConfig(channels=48, num_groups=4, blocks_per_group=3),
    "tiny": ModelConfig(channels=48, num_groups=3, blocks_per_group=3),
}


def preset(name: str, scale: int = 4, **overrides) -> ModelConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; expected one of {sorted(PRESETS)}")
    return replace(PRESETS[name], scale=scale, **overrides).validate()


class HybridBlock(Module):
    def __init__(self, cfg: ModelConfig, rng, dtype):
        def local():
            if cfg.local_variant == "mhsa":
                return WindowedSpatialBlock(
                    cfg.channels, cfg.heads, cfg.ffn_expansion, rng, dtype=dtype
                )
            return DynamicLocalBlock(
                cfg.channels,
                cfg.heads,
                cfg.kernel_size,
                cfg.squeeze_ratio,
                cfg.ffn_expansion,
                rng,
                dtype=dtype,
            )

        def global_():
            return SparseChannelBlock(
                cfg.channels,
                cfg.heads,
                cfg.ffn_expansion,
                rng,
                dtype=dtype,
                variant=cfg.attention_variant,
            )

        if cfg.block_mix == "hybrid":
            self.first, self.second = local(), global_()
        elif cfg.block_mix == "local_only":
            self.first, self.second = local(), local()
        else:
            self.first, self.second = global_(), global_()

    def forward(self, x: Tensor, tlc_win: int | None = None) -> Tensor:
        for sub in (self.first, self.second):
            if tlc_win is not None and isinstance(sub, SparseChannelBlock):
                x = tiled_forward(sub, x, tlc_win)
            else:
                x = sub(x)
        return x


class ResidualGroup(Module):
    def __init__(self, cfg: ModelConfig, rng, dtype):
        self.blocks = [HybridBlock(cfg, rng, dtype) for _ in range(cfg.blocks_per_group)]
        self.fuse = Conv2d(cfg.channels, cfg.channels, 3, rng, dtype=dtype, init="zeros")

    def forward(self, x: Tensor, tlc_win: int | None = None) -> Tensor:
        y = x
        for b in self.blocks:
            y = b(y, tlc_win)
        return ops.add(x, self.fuse(y))


class SRNetwork(Module):
    def __init__(self, cfg: ModelConfig, rng, dtype=np.float32):
        cfg.validate()
        self.cfg = cfg
        self.head = Conv2d(3, cfg.channels, 3, rng, dtype=dtype)
        self.groups = [ResidualGroup(cfg, rng, dtype) for _ in range(cfg.num_groups)]
        self.tail = Conv2d(cfg.channels, 3 * cfg.scale * cfg.scale, 3, rng, dtype=dtype)

    def forward(self, x: Tensor, tlc_win: int | None = None) -> Tensor:
        f0 = self.head(x)
        y = f0
        for g in self.groups:
            y = g(y, tlc_win)
        y = ops.add(y, f0)
        return ops.pixel_shuffle(self.tail(y), self.cfg.scale)

    def feature_stack(self, x: Tensor, tlc_win: int | None = None) -> Tensor:
        """Groups-only map (head features in, fused features out); identity at init."""
        y = x
        for g in self.groups:
            y = g(y, tlc_win)
        return y


def build_model(cfg: ModelConfig, seed: int = 0, dtype=np.float32) -> SRNetwork:
    """Deterministic construction: same config, seed, and dtype => same weights."""
    rng = np.random.default_rng(seed)
    model = SRNetwork(cfg, rng, dtype=dtype)
    model.label_modules()
    return model
