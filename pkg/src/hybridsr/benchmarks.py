"""Frozen reproducibility benchmarks.

The convergence benchmark overfits the tiny model on a fixed procedural
dataset; every knob is a module constant so the run is bit-reproducible and
quotable. The ablation suites rerun the same recipe with one architectural
switch flipped (block mix, attention variant, or local operator) and report
the resulting PSNR pairs; they make directional claims only, never absolute
quality claims.
"""
from __future__ import annotations

import dataclasses
import time

from .data import load_hr_images
from .errors import UsageError
from .evaluate import bicubic_baseline, evaluate_images
from .network import preset
from .training import TrainConfig, train

BENCH_DATASET = "synth:8x64:stripes,checker,mixed"
BENCH_SEED = 7
BENCH_SCALE = 2
BENCH_ITERS = 2000
BENCH_BATCH = 2
BENCH_LR_PATCH = 16
BENCH_LR = 1e-3
# early decay: holding 1e-3 past ~400 steps destabilizes the unnormalized
# channel attention (observed loss blow-up), so the schedule front-loads it
BENCH_MILESTONES = (200, 400, 800, 1200, 1600)
BENCH_AUGMENT = False  # overfit target: augmentation only slows memorization
BENCH_TLC_WIN = 16  # = BENCH_LR_PATCH so inference tiles match training stats

PSNR_FLOOR_DB = 40.0
BICUBIC_MARGIN_DB = 10.0
ABLATION_TOL_DB = 0.5


@dataclasses.dataclass
class BenchmarkResult:
    label: str
    psnr: float
    ssim: float
    bicubic_psnr: float
    final_loss: float
    seconds: float

    @property
    def margin(self) -> float:
        return self.psnr - self.bicubic_psnr

    def __str__(self):
        return (f"{self.label}: PSNR {self.psnr:.2f} dB (bicubic "
                f"{self.bicubic_psnr:.2f}, margin {self.margin:+.2f}), "
                f"SSIM {self.ssim:.4f}, loss {self.final_loss:.4f}, "
                f"{self.seconds:.0f}s")


def convergence_config(*, block_mix="hybrid", attention_variant="relu",
                       local_variant="mhdlsa", iters=0) -> TrainConfig:
    """The frozen recipe, with optional single-switch overrides for ablations."""
    model = preset("tiny", scale=BENCH_SCALE, block_mix=block_mix,
                   attention_variant=attention_variant,
                   local_variant=local_variant)
    budget = iters or BENCH_ITERS
    return TrainConfig(
        model=model,
        iters=budget,
        batch=BENCH_BATCH,
        lr_patch=BENCH_LR_PATCH,
        lr=BENCH_LR,
        milestones=tuple(m for m in BENCH_MILESTONES if m < budget),
        seed=BENCH_SEED,
        augment=BENCH_AUGMENT,
        dataset=BENCH_DATASET,
        log_interval=200,
    ).validate()


def run_benchmark(label: str, cfg: TrainConfig, *, log=None) -> BenchmarkResult:
    """Train `cfg` from scratch and score it on its own HR images."""
    t0 = time.time()
    state, history = train(cfg, log=log)
    images = load_hr_images(cfg.dataset, seed=cfg.seed)
    scored = evaluate_images(state.model, images, cfg.model.scale,
                             tlc_win=BENCH_TLC_WIN)
    base = bicubic_baseline(images, cfg.model.scale)
    result = BenchmarkResult(
        label=label,
        psnr=scored.psnr,
        ssim=scored.ssim,
        bicubic_psnr=base.psnr,
        final_loss=float(history[-1]["loss"]) if history else float("nan"),
        seconds=time.time() - t0,
    )
    if log:
        log(str(result))
    return result


def run_convergence(*, iters=0, log=None) -> BenchmarkResult:
    return run_benchmark("convergence", convergence_config(iters=iters), log=log)


_SUITES = {
    "hdtb": (
        ("hybrid", dict(block_mix="hybrid")),
        ("local_only", dict(block_mix="local_only")),
        ("global_only", dict(block_mix="global_only")),
    ),
    "attention": (
        ("relu", dict(attention_variant="relu")),
        ("softmax", dict(attention_variant="softmax")),
    ),
    "local": (
        ("mhdlsa", dict(local_variant="mhdlsa")),
        ("mhsa", dict(local_variant="mhsa")),
    ),
}


def run_suite(suite: str, *, iters=0, log=None) -> dict[str, BenchmarkResult]:
    if suite not in _SUITES:
        raise UsageError(f"unknown ablation suite {suite!r}; "
                         f"choose from {sorted(_SUITES)}")
    results = {}
    for label, overrides in _SUITES[suite]:
        if log:
            log(f"== variant {label} ==")
        cfg = convergence_config(iters=iters, **overrides)
        results[label] = run_benchmark(label, cfg, log=log)
    return results


def hdtb_direction_holds(results: dict[str, BenchmarkResult]) -> bool:
    """Hybrid must not trail the weaker single-branch variant by > tolerance."""
    single = min(results["local_only"].psnr, results["global_only"].psnr)
    return results["hybrid"].psnr >= single - ABLATION_TOL_DB


def run_ablation(suite: str, *, iters=0, log=print) -> dict[str, BenchmarkResult]:
    results = run_suite(suite, iters=iters, log=log)
    if log:
        log("")
        for label, res in results.items():
            log(str(res))
        if suite == "hdtb":
            verdict = "holds" if hdtb_direction_holds(results) else "VIOLATED"
            single = min(results["local_only"].psnr, results["global_only"].psnr)
            log(f"direction check: hybrid {results['hybrid'].psnr:.2f} dB vs "
                f"weaker single-branch {single:.2f} dB - {ABLATION_TOL_DB} "
                f"tolerance: {verdict}")
    return results
