"""Finite-difference validation of analytic gradients.

All checks run in float64 with central differences. Relative error for one
coordinate is |a - n| / max(|a|, |n|, REL_FLOOR); a check reports the maximum
over the coordinates it visits. The floor matters: on an O(1) loss the
difference quotient carries ~1e-11 of rounding noise, so coordinates whose
true gradient is near zero cannot be resolved relatively. With the floor at
1e-5 a near-zero coordinate is effectively held to an absolute tolerance of
tol * 1e-5, about two orders above that noise.
"""
from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from . import tensor as tz
from .errors import ConfigError, NumericError, UsageError
from .tensor import Tensor

REL_FLOOR = 1e-5


def _require_f64(t: Tensor, what: str):
    if t.data.dtype != np.float64:
        raise ConfigError(f"{what} must be float64 for finite differences, got {t.data.dtype}")


def _rel_err(a: float, n: float) -> float:
    return abs(a - n) / max(abs(a), abs(n), REL_FLOOR)


def _numeric_partial(f: Callable[[], Tensor], arr: np.ndarray, idx, eps: float) -> float:
    orig = arr[idx]
    with tz.no_grad():
        arr[idx] = orig + eps
        fp = f().item()
        arr[idx] = orig - eps
        fm = f().item()
    arr[idx] = orig
    return (fp - fm) / (2.0 * eps)


def finite_diff_check(
    f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-5
) -> float:
    """Max relative error of df/dx over every coordinate of x.

    f must be a pure function of x returning a scalar tensor; it is re-run
    2*size times for the numeric side, so keep x small.
    """
    if eps <= 0:
        raise ConfigError(f"eps must be > 0, got {eps}")
    _require_f64(x, "input")
    if not x.requires_grad:
        raise UsageError("finite_diff_check input must have requires_grad=True")
    tz.clear_graph()
    x.grad = None
    out = f(x)
    if out.data.size != 1:
        raise UsageError(f"check function must return a scalar, got shape {out.shape}")
    out.backward()
    if x.grad is None:
        raise NumericError("analytic gradient is missing (graph disconnected?)")
    analytic = x.grad.copy()
    tz.clear_graph()

    worst = 0.0
    flat = x.data.reshape(-1)
    aflat = analytic.reshape(-1)
    for i in range(flat.size):
        n = _numeric_partial(lambda: f(x), flat, i, eps)
        worst = max(worst, _rel_err(aflat[i], n))
    return worst


def check_params(
    loss_fn: Callable[[], Tensor],
    params: Sequence[tuple[str, Tensor]],
    rng: np.random.Generator,
    coords_per_param: int = 2,
    min_coords: int = 10,
    eps: float = 1e-5,
) -> tuple[float, list[tuple[str, int, float, float, float]]]:
    """Spot-check d(loss)/d(param) on sampled coordinates of each parameter.

    Returns (max relative error, rows of (name, flat index, analytic, numeric,
    rel err)) so callers can both assert and report. At least `min_coords`
    coordinates are visited overall.
    """
    if eps <= 0:
        raise ConfigError(f"eps must be > 0, got {eps}")
    params = list(params)
    if not params:
        raise UsageError("no parameters to check")
    for name, p in params:
        _require_f64(p, f"parameter {name}")

    tz.clear_graph()
    for _, p in params:
        p.grad = None
    out = loss_fn()
    if out.data.size != 1:
        raise UsageError("loss_fn must return a scalar")
    out.backward()
    analytic = {}
    for name, p in params:
        analytic[name] = np.zeros_like(p.data) if p.grad is None else p.grad.copy()
    tz.clear_graph()

    picks: list[tuple[str, Tensor, int]] = []
    for name, p in params:
        size = p.data.size
        k = min(coords_per_param, size)
        for i in rng.choice(size, size=k, replace=False):
            picks.append((name, p, int(i)))
    total = sum(p.data.size for _, p in params)
    while len(picks) < min_coords:
        j = int(rng.integers(total))
        for name, p in params:
            if j < p.data.size:
                picks.append((name, p, j))
                break
            j -= p.data.size

    worst = 0.0
    rows = []
    for name, p, i in picks:
        a = float(analytic[name].reshape(-1)[i])
        n = _numeric_partial(loss_fn, p.data.reshape(-1), i, eps)
        r = _rel_err(a, n)
        rows.append((name, i, a, n, r))
        worst = max(worst, r)
    return worst, rows
