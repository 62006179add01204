"""Hybrid local/global attention super-resolution, self-contained on NumPy."""

from .tensor import Tensor, parameter, no_grad, clear_graph

__all__ = ["Tensor", "parameter", "no_grad", "clear_graph"]

__version__ = "0.1.0"
