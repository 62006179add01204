"""L1 training loop with Adam, multi-step LR, and bitwise-resumable state.

Determinism contract: a run is a pure function of (TrainConfig, dataset).
All randomness flows through one PCG64 generator whose state is saved in the
checkpoint header, so save-at-N + resume-for-M reproduces train-for-(N+M)
bit for bit on the same platform.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable

import numpy as np

from . import ops
from .checkpoint import KIND_TRAIN, model_header, read_container, write_container
from .data import load_hr_images, sample_batch
from .errors import ConfigError, NumericError, UsageError
from .evaluate import evaluate_images
from .network import ModelConfig, SRNetwork, build_model
from .tensor import Tensor, clear_graph, first_nonfinite_op

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class TrainConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    iters: int = 2000
    batch: int = 16
    lr_patch: int = 48
    lr: float = 5e-4
    lr_decay: float = 0.5
    milestones: tuple[int, ...] = ()  # empty: 50/75/90% of iters
    seed: int = 0
    augment: bool = True
    precision: str = "f32"
    dataset: str = "synth:8x64"
    eval_interval: int = 0  # 0 disables periodic train-set PSNR
    log_interval: int = 100

    def validate(self):
        self.model.validate()
        if self.iters < 1:
            raise ConfigError(f"iters must be >= 1, got {self.iters}")
        if self.batch < 1:
            raise ConfigError(f"batch must be >= 1, got {self.batch}")
        if self.lr_patch < 8:
            raise ConfigError(f"lr_patch must be >= 8, got {self.lr_patch}")
        if not 0 < self.lr:
            raise ConfigError(f"lr must be > 0, got {self.lr}")
        if not 0 < self.lr_decay <= 1:
            raise ConfigError(f"lr_decay must be in (0, 1], got {self.lr_decay}")
        if self.precision not in ("f32", "f64"):
            raise ConfigError(f"precision must be f32 or f64, got {self.precision!r}")
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")
        if any(m < 1 for m in self.milestones):
            raise ConfigError(f"milestones must be >= 1, got {self.milestones}")
        return self

    def resolved_milestones(self) -> tuple[int, ...]:
        if self.milestones:
            return tuple(sorted(self.milestones))
        return (self.iters // 2, (3 * self.iters) // 4, (9 * self.iters) // 10)

    @property
    def np_dtype(self):
        return np.float32 if self.precision == "f32" else np.float64


def l1_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean absolute error over all elements."""
    return ops.mean_all(ops.abs_(ops.sub(pred, target)))


def lr_at(iteration: int, base_lr: float, milestones: tuple[int, ...], decay: float) -> float:
    """Step schedule: lr * decay^(number of milestones <= iteration)."""
    return base_lr * decay ** sum(1 for m in milestones if m <= iteration)


class Adam:
    """Bias-corrected Adam over a fixed named-parameter set."""

    def __init__(self, named_params: list[tuple[str, Tensor]]):
        self.params = named_params
        self.t = 0
        self.m = {n: np.zeros_like(p.data) for n, p in named_params}
        self.v = {n: np.zeros_like(p.data) for n, p in named_params}

    def step(self, lr: float):
        self.t += 1
        b1c = 1.0 - ADAM_BETA1**self.t
        b2c = 1.0 - ADAM_BETA2**self.t
        for name, p in self.params:
            g = p.grad
            if g is None:
                continue
            m = self.m[name]
            v = self.v[name]
            m *= ADAM_BETA1
            m += (1.0 - ADAM_BETA1) * g
            v *= ADAM_BETA2
            v += (1.0 - ADAM_BETA2) * (g * g)
            p.data -= (lr / b1c) * m / (np.sqrt(v / b2c) + ADAM_EPS)

    def export_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for name in self.m:
            out[f"opt/m/{name}"] = self.m[name]
            out[f"opt/v/{name}"] = self.v[name]
        return out

    def load_arrays(self, arrays: dict[str, np.ndarray]):
        for name in self.m:
            mk, vk = f"opt/m/{name}", f"opt/v/{name}"
            if mk not in arrays or vk not in arrays:
                raise ConfigError(f"checkpoint missing optimizer state for {name}")
            self.m[name] = arrays[mk].astype(self.m[name].dtype, copy=True)
            self.v[name] = arrays[vk].astype(self.v[name].dtype, copy=True)


@dataclass
class TrainState:
    model: SRNetwork
    opt: Adam
    rng: np.random.Generator
    iteration: int
    cfg: TrainConfig


def _train_config_dict(cfg: TrainConfig) -> dict:
    d = {f.name: getattr(cfg, f.name) for f in fields(cfg) if f.name != "model"}
    d["milestones"] = list(cfg.milestones)
    return d


def _train_config_from_dict(d: dict, model: ModelConfig) -> TrainConfig:
    d = dict(d)
    d["milestones"] = tuple(d.get("milestones", ()))
    return TrainConfig(model=model, **d).validate()


def save_train_checkpoint(path: str | Path, state: TrainState):
    header = model_header(state.model, KIND_TRAIN)
    header["iteration"] = state.iteration
    header["train"] = _train_config_dict(state.cfg)
    header["rng_state"] = state.rng.bit_generator.state
    header["adam_t"] = state.opt.t
    arrays = {f"model/{k}": v for k, v in state.model.export_arrays().items()}
    arrays.update(state.opt.export_arrays())
    write_container(path, header, arrays)


def load_train_checkpoint(path: str | Path) -> TrainState:
    header, arrays = read_container(path)
    if header.get("kind") != KIND_TRAIN:
        raise UsageError(f"{path}: not a training checkpoint")
    model_cfg = ModelConfig.from_dict(header["model"])
    cfg = _train_config_from_dict(header["train"], model_cfg)
    model = build_model(model_cfg, seed=cfg.seed, dtype=cfg.np_dtype)
    model.load_arrays(
        {k[len("model/") :]: v for k, v in arrays.items() if k.startswith("model/")}
    )
    opt = Adam(list(model.named_params()))
    opt.t = int(header["adam_t"])
    opt.load_arrays(arrays)
    rng = np.random.default_rng(0)
    rng.bit_generator.state = header["rng_state"]
    return TrainState(model=model, opt=opt, rng=rng, iteration=int(header["iteration"]), cfg=cfg)


def init_train_state(cfg: TrainConfig) -> TrainState:
    cfg.validate()
    model = build_model(cfg.model, seed=cfg.seed, dtype=cfg.np_dtype)
    opt = Adam(list(model.named_params()))
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xD1]))
    return TrainState(model=model, opt=opt, rng=rng, iteration=0, cfg=cfg)


def train(
    cfg_or_state: TrainConfig | TrainState,
    iters: int | None = None,
    log: Callable[[str], None] | None = None,
    checkpoint_path: str | Path | None = None,
    checkpoint_interval: int = 0,
) -> tuple[TrainState, list[dict]]:
    """Run (or continue) training; returns final state and metric records.

    A non-finite loss aborts with NumericError naming the first offending op,
    leaving the last checkpoint (if any) untouched.
    """
    if isinstance(cfg_or_state, TrainConfig):
        state = init_train_state(cfg_or_state)
    else:
        state = cfg_or_state
    cfg = state.cfg
    hr_images = load_hr_images(cfg.dataset, seed=cfg.seed)
    target_iter = cfg.iters if iters is None else state.iteration + iters
    milestones = cfg.resolved_milestones()
    dtype = cfg.np_dtype
    history: list[dict] = []
    t0 = time.monotonic()

    while state.iteration < target_iter:
        state.iteration += 1
        it = state.iteration
        lr_in, hr_t = sample_batch(
            state.rng, hr_images, cfg.batch, cfg.lr_patch, cfg.model.scale,
            augment=cfg.augment, dtype=dtype,
        )
        clear_graph()
        pred = state.model(Tensor(lr_in))
        loss = l1_loss(pred, Tensor(hr_t))
        loss_val = loss.item()
        if not np.isfinite(loss_val):
            bad = first_nonfinite_op() or "loss"
            clear_graph()
            raise NumericError(
                f"non-finite loss at iteration {it}; first non-finite op: {bad}"
            )
        state.model.zero_grads()
        loss.backward()
        step_lr = lr_at(it, cfg.lr, milestones, cfg.lr_decay)
        state.opt.step(step_lr)
        clear_graph()

        rec = {"iter": it, "loss": loss_val, "lr": step_lr}
        if cfg.eval_interval and (it % cfg.eval_interval == 0 or it == target_iter):
            rec["train_psnr"] = evaluate_images(state.model, hr_images, cfg.model.scale).psnr
        history.append(rec)
        if log and (it % cfg.log_interval == 0 or it == target_iter or it == 1):
            extra = f" train_psnr={rec['train_psnr']:.2f}" if "train_psnr" in rec else ""
            log(
                f"iter {it}/{target_iter} loss={loss_val:.5f} lr={step_lr:.2e}"
                f" elapsed={time.monotonic() - t0:.1f}s{extra}"
            )
        if checkpoint_path and checkpoint_interval and it % checkpoint_interval == 0:
            save_train_checkpoint(checkpoint_path, state)

    if checkpoint_path:
        save_train_checkpoint(checkpoint_path, state)
    return state, history
