"""Finite-difference gradient audits over whole blocks and the full network.

Each audit builds a small float64 module, pushes a fixed random input through
it to a smooth scalar loss, and compares analytic parameter gradients against
central differences. Smooth loss only: |.| or ReLU kinks near zero turn the
comparison into a test of the perturbation size rather than of the gradients.
"""
from __future__ import annotations

import numpy as np

from . import ops
from .gradcheck import check_params
from .network import ModelConfig, build_model
from .tensor import Tensor, clear_graph

GRAD_TOL = 1e-4
_MIN_COORDS = 10


def _smooth_loss(out: Tensor) -> Tensor:
    return ops.mean_all(ops.mul(out, out))


def _audit(name, module, x_data, *, eps, picks, log):
    """Gradcheck `module` on input `x_data`; returns (worst_rel, n_coords)."""
    params = list(module.named_params())

    def loss_fn():
        clear_graph()
        x = Tensor(x_data.copy())
        return _smooth_loss(module(x))

    rng = np.random.default_rng(17)
    worst, rows = check_params(
        loss_fn, params, rng, coords_per_param=picks, min_coords=_MIN_COORDS, eps=eps
    )
    if log:
        log(f"{name}: {len(rows)} coordinates over {len(params)} tensors, "
            f"max rel err {worst:.3e}")
    return worst, rows


def _input(shape, seed):
    rng = np.random.default_rng(seed)
    return rng.standard_normal(shape).astype(np.float64) * 0.5


def _wake_params(module, seed, scale=0.05):
    """Fill all-zero parameters with small noise so every gradient path is live.

    Residual branches end in zero-initialized projections, so at init the loss
    gradient with respect to everything upstream of them is exactly zero and
    those coordinates would pass the comparison vacuously.
    """
    rng = np.random.default_rng(seed)
    for _, p in module.named_params():
        if not p.data.any():
            p.data[...] = rng.standard_normal(p.data.shape) * scale


def _small_cfg(**kw):
    base = dict(channels=12, num_groups=1, blocks_per_group=1, heads=3, scale=2)
    base.update(kw)
    return ModelConfig(**base).validate()


def audit_local_block(*, seed=0, eps=1e-5, log=None):
    from .dynamic_local import DynamicLocalBlock

    block = DynamicLocalBlock(12, heads=3, kernel_size=3, squeeze_ratio=0.5,
                              ffn_expansion=2.0, rng=np.random.default_rng(seed),
                              dtype=np.float64)
    block.label_modules()
    _wake_params(block, seed + 90)
    return _audit("mhdlsa", block, _input((2, 12, 7, 6), seed + 1),
                  eps=eps, picks=2, log=log)


def audit_global_block(*, seed=0, eps=1e-5, log=None):
    from .sparse_global import SparseChannelBlock

    block = SparseChannelBlock(12, heads=3, ffn_expansion=2.0,
                               rng=np.random.default_rng(seed), dtype=np.float64)
    block.label_modules()
    _wake_params(block, seed + 91)
    return _audit("sparsegsa", block, _input((2, 12, 7, 6), seed + 2),
                  eps=eps, picks=2, log=log)


def audit_hybrid_block(*, seed=0, eps=1e-5, log=None):
    from .network import HybridBlock

    block = HybridBlock(_small_cfg(), np.random.default_rng(seed), np.float64)
    block.label_modules()
    _wake_params(block, seed + 92)
    return _audit("hdtb", block, _input((2, 12, 7, 6), seed + 4),
                  eps=eps, picks=1, log=log)


def audit_residual_group(*, seed=0, eps=1e-5, log=None):
    from .network import ResidualGroup

    group = ResidualGroup(_small_cfg(blocks_per_group=2),
                          np.random.default_rng(seed), np.float64)
    group.label_modules()
    _wake_params(group, seed + 93)
    return _audit("rhdtg", group, _input((1, 12, 8, 7), seed + 5),
                  eps=eps, picks=0, log=log)


def audit_network(*, seed=0, eps=1e-5, log=None):
    model = build_model(_small_cfg(), seed=seed, dtype=np.float64)
    _wake_params(model, seed + 94)
    return _audit("network", model, _input((1, 3, 8, 7), seed + 3) * 0.2 + 0.4,
                  eps=eps, picks=1, log=log)


def audit_tiny_network(*, seed=0, eps=1e-5, log=None):
    from .network import PRESETS
    import dataclasses

    cfg = dataclasses.replace(PRESETS["tiny"], scale=2).validate()
    model = build_model(cfg, seed=seed, dtype=np.float64)
    _wake_params(model, seed + 95)
    return _audit("tiny", model, _input((1, 3, 8, 7), seed + 6) * 0.2 + 0.4,
                  eps=eps, picks=0, log=log)


_AUDITS = {
    "mhdlsa": (audit_local_block,),
    "sparsegsa": (audit_global_block,),
    "hdtb": (audit_hybrid_block,),
    "rhdtg": (audit_residual_group,),
    "network": (audit_network,),
    "tiny": (audit_tiny_network,),
    "all": (audit_local_block, audit_global_block, audit_hybrid_block,
            audit_residual_group, audit_network, audit_tiny_network),
}


def run_gradcheck(module: str, *, seed=0, eps=1e-5, log=None) -> list[str]:
    """Run the named audit(s); returns the names whose error exceeds GRAD_TOL."""
    if module not in _AUDITS:
        from .errors import UsageError

        raise UsageError(f"unknown gradcheck module {module!r}")
    failures = []
    for fn in _AUDITS[module]:
        worst, rows = fn(seed=seed, eps=eps, log=log)
        if not (worst < GRAD_TOL):
            name = fn.__name__.replace("audit_", "")
            failures.append(f"{name} (max rel err {worst:.3e})")
            if log:
                for pname, idx, analytic, numeric, rel in rows:
                    if rel >= GRAD_TOL:
                        log(f"  {pname}{list(idx)}: analytic {analytic:.6e} "
                            f"numeric {numeric:.6e} rel {rel:.3e}")
    return failures
