"""Parameterized layers and the reflective module container.

Parameter names come from attribute paths ("groups.0.blocks.1.ffn.expand.w"),
which makes checkpoint layouts stable as long as construction order is stable.
Initialization follows the network's scheme: truncated normal (std 0.02) for
pointwise/attention projections, fan-in uniform for spatial convs, zeros for
the last conv of every residual branch, zero biases.
"""
from __future__ import annotations

from typing import Iterator

import numpy as np

from . import ops
from .errors import ConfigError, DimensionError
from .tensor import Tensor


def trunc_normal(rng: np.random.Generator, shape, std: float = 0.02) -> np.ndarray:
    """Normal(0, std) resampled until inside [-2 std, 2 std]."""
    out = rng.normal(0.0, std, size=shape)
    for _ in range(16):
        bad = np.abs(out) > 2.0 * std
        if not bad.any():
            break
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
    return np.clip(out, -2.0 * std, 2.0 * std)


def fanin_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Module:
    """Base container; submodules and parameters are discovered reflectively."""

    name: str = ""

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def __call__(self, *args, **kwargs):
        out = self.forward(*args, **kwargs)
        # tag the layer path onto the op name so numeric aborts can cite it
        if self.name and isinstance(out, Tensor) and out.op != "leaf":
            if "@" not in out.op:
                out.op = f"{out.op}@{self.name}"
        return out

    def _children(self) -> Iterator[tuple[str, object]]:
        for key, val in vars(self).items():
            if key == "name":
                continue
            if isinstance(val, (Module, Tensor)):
                yield key, val
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, (Module, Tensor)):
                        yield f"{key}.{i}", item

    def named_params(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for key, val in self._children():
            path = f"{prefix}{key}"
            if isinstance(val, Tensor):
                if val.requires_grad:
                    yield path, val
            else:
                yield from val.named_params(f"{path}.")

    def named_modules(self, prefix: str = "") -> Iterator[tuple[str, "Module"]]:
        yield prefix.rstrip("."), self
        for key, val in self._children():
            if isinstance(val, Module):
                yield from val.named_modules(f"{prefix}{key}.")

    def params(self) -> list[Tensor]:
        return [p for _, p in self.named_params()]

    def param_count(self) -> int:
        return sum(p.data.size for p in self.params())

    def zero_grads(self):
        for p in self.params():
            p.grad = None

    def export_arrays(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_params()}

    def load_arrays(self, arrays: dict[str, np.ndarray]):
        own = dict(self.named_params())
        missing = sorted(set(own) - set(arrays))
        extra = sorted(set(arrays) - set(own))
        if missing or extra:
            raise ConfigError(
                f"parameter set mismatch; missing={missing[:4]} extra={extra[:4]}"
            )
        for name, p in own.items():
            arr = arrays[name]
            if arr.shape != p.data.shape:
                raise DimensionError(
                    f"{name}: checkpoint shape {arr.shape} != model {p.data.shape}"
                )
            p.data = arr.astype(p.data.dtype, copy=True)

    def label_modules(self):
        """Assign attribute paths as module names (used in diagnostics)."""
        for path, mod in self.named_modules():
            mod.name = path


class Conv2d(Module):
    """Same-size stride-1 convolution with odd kernel."""

    def __init__(
        self,
        cin: int,
        cout: int,
        k: int,
        rng: np.random.Generator,
        dtype=np.float32,
        groups: int = 1,
        bias: bool = True,
        pad_mode: str = "zeros",
        init: str = "auto",
    ):
        if init == "auto":
            init = "trunc_normal" if k == 1 else "fanin_uniform"
        shape = (cout, cin // groups, k, k)
        if init == "trunc_normal":
            wdata = trunc_normal(rng, shape)
        elif init == "fanin_uniform":
            wdata = fanin_uniform(rng, shape, (cin // groups) * k * k)
        elif init == "zeros":
            wdata = np.zeros(shape)
        else:
            raise ConfigError(f"unknown init {init!r}")
        self.w = Tensor(wdata, requires_grad=True, dtype=dtype)
        self.b = Tensor(np.zeros(cout), requires_grad=True, dtype=dtype) if bias else None
        self.k = k
        self.groups = groups
        self.pad_mode = pad_mode

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv2d(
            x,
            self.w,
            self.b,
            padding=self.k // 2,
            pad_mode=self.pad_mode,
            groups=self.groups,
        )


class DepthwiseConv2d(Module):
    def __init__(
        self,
        channels: int,
        k: int,
        rng: np.random.Generator,
        dtype=np.float32,
        bias: bool = True,
        pad_mode: str = "zeros",
    ):
        self.w = Tensor(
            fanin_uniform(rng, (channels, 1, k, k), k * k),
            requires_grad=True,
            dtype=dtype,
        )
        self.b = Tensor(np.zeros(channels), requires_grad=True, dtype=dtype) if bias else None
        self.pad_mode = pad_mode

    def forward(self, x: Tensor) -> Tensor:
        return ops.depthwise_conv2d(x, self.w, self.b, pad_mode=self.pad_mode)


class LayerNorm(Module):
    """Channel-axis normalization for NCHW maps."""

    def __init__(self, channels: int, dtype=np.float32, eps: float = 1e-5):
        self.gain = Tensor(np.ones(channels), requires_grad=True, dtype=dtype)
        self.offset = Tensor(np.zeros(channels), requires_grad=True, dtype=dtype)
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return ops.layer_norm(x, self.gain, self.offset, eps=self.eps)
