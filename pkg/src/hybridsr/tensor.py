"""NCHW float tensors with reverse-mode autodiff over a flat operation tape.

Every differentiable op appends its output to a process-global tape in
execution order, which is one valid topological order of the graph.
``backward`` walks the tape in reverse, so a single pass handles arbitrary
DAGs (shared subexpressions, long skips). The tape doubles as a diagnostic
record: after a bad step the first op with a non-finite output can be named.

Graphs are single-threaded; inference code should wrap calls in ``no_grad``,
which skips recording entirely and leaves pure NumPy execution.
"""
from __future__ import annotations

import struct
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DimensionError, UsageError

FLOAT_DTYPES = (np.float32, np.float64)

_grad_enabled = True
_tape: list["Tensor"] = []


class no_grad:
    """Context manager that disables op recording (and gradient tracking)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def grad_enabled() -> bool:
    return _grad_enabled


def clear_graph():
    """Drop all recorded ops. Call between training steps to release memory."""
    _tape.clear()


def graph_size() -> int:
    return len(_tape)


def first_nonfinite_op() -> str | None:
    """Name of the earliest recorded op whose output holds NaN/Inf, or None."""
    for t in _tape:
        if not np.all(np.isfinite(t.data)):
            return t.op
    return None


def _as_float_array(data, dtype=None) -> np.ndarray:
    arr = np.asarray(data)
    if dtype is not None:
        arr = arr.astype(dtype, copy=False)
    elif arr.dtype not in FLOAT_DTYPES:
        arr = arr.astype(np.float32)
    return arr


class Tensor:
    """A NumPy array plus an optional gradient of the same shape and dtype."""

    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = _as_float_array(data, dtype)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.op = "leaf"
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    # -- op-output construction (used by the ops module) --------------------

    @classmethod
    def _from_op(
        cls,
        data: np.ndarray,
        parents: Sequence["Tensor"],
        backward: Callable[[np.ndarray], None],
        op: str,
    ) -> "Tensor":
        t = cls.__new__(cls)
        t.data = data
        t.grad = None
        t.op = op
        if _grad_enabled and any(p.requires_grad for p in parents):
            t.requires_grad = True
            t._parents = tuple(parents)
            t._backward = backward
            _tape.append(t)
        else:
            t.requires_grad = False
            t._parents = ()
            t._backward = None
        return t

    # -- basics --------------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self):
        self.grad = None

    def accumulate_grad(self, g: np.ndarray):
        if g.shape != self.data.shape:
            raise DimensionError(
                f"gradient shape {g.shape} != tensor shape {self.data.shape}"
            )
        if self.grad is None:
            # copy: callers may hand over views into arrays they still mutate
            self.grad = g.astype(self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self):
        """Reverse-mode sweep seeding d(self)/d(self) = 1.

        Leaf gradients accumulate across calls; op-output (intermediate)
        gradients are reset at the start of each sweep so repeated calls on
        the same recorded graph contribute exactly one gradient each.
        """
        if self.data.size != 1:
            raise UsageError(
                f"backward() requires a scalar output, got shape {self.shape}"
            )
        if not self.requires_grad:
            return
        for t in _tape:
            t.grad = None
        self.grad = np.ones_like(self.data)
        for t in reversed(_tape):
            if t.grad is not None and t._backward is not None:
                t._backward(t.grad)

    def __repr__(self):
        flag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{flag}, op={self.op})"


def tensor(data, requires_grad: bool = False, dtype=None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, dtype=dtype)


def parameter(data, dtype=None) -> Tensor:
    return Tensor(data, requires_grad=True, dtype=dtype)


# -- binary tensor serialization ---------------------------------------------
#
# Layout (little-endian throughout):
#   magic "DLGT" | version u32 | rank u32 | dims u32 * rank | dtype tag u32 |
#   raw element bytes, C order.
# Dtype tags: 1 = float32, 2 = float64.

_MAGIC = b"DLGT"
_VERSION = 1
_DTYPE_TAG = {np.dtype(np.float32): 1, np.dtype(np.float64): 2}
_TAG_DTYPE = {1: np.dtype(np.float32), 2: np.dtype(np.float64)}


def write_array(fp, arr: np.ndarray):
    arr = np.asarray(arr)
    if not arr.flags["C_CONTIGUOUS"]:
        # ascontiguousarray would promote 0-d arrays to 1-d, so gate it
        arr = np.ascontiguousarray(arr)
    if arr.dtype not in _DTYPE_TAG:
        raise UsageError(f"unsupported dtype for serialization: {arr.dtype}")
    fp.write(_MAGIC)
    fp.write(struct.pack("<II", _VERSION, arr.ndim))
    fp.write(struct.pack(f"<{arr.ndim}I" if arr.ndim else "<", *arr.shape))
    fp.write(struct.pack("<I", _DTYPE_TAG[arr.dtype]))
    fp.write(arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes())


def read_array(fp) -> np.ndarray:
    def take(n: int, what: str) -> bytes:
        buf = fp.read(n)
        if len(buf) != n:
            raise UsageError(f"truncated tensor stream while reading {what}")
        return buf

    if take(4, "magic") != _MAGIC:
        raise UsageError("bad magic; not a serialized tensor")
    version, rank = struct.unpack("<II", take(8, "header"))
    if version != _VERSION:
        raise UsageError(f"unsupported tensor format version {version}")
    if rank > 8:
        raise UsageError(f"implausible tensor rank {rank}")
    dims = struct.unpack(f"<{rank}I", take(4 * rank, "dims")) if rank else ()
    (tag,) = struct.unpack("<I", take(4, "dtype"))
    if tag not in _TAG_DTYPE:
        raise UsageError(f"unknown dtype tag {tag}")
    dtype = _TAG_DTYPE[tag]
    count = int(np.prod(dims, dtype=np.int64)) if rank else 1
    raw = take(count * dtype.itemsize, "data")
    arr = np.frombuffer(raw, dtype=dtype.newbyteorder("<")).astype(dtype)
    return arr.reshape(dims)


def roundtrip_equal(a: np.ndarray, b: np.ndarray) -> bool:
    return a.shape == b.shape and a.dtype == b.dtype and np.array_equal(a, b)
