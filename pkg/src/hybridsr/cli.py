"""Command-line interface.

Subcommands: train, eval, sr, count, gradcheck, ablate, synth. Configuration
is a preset name (full/light/tiny) or a flat key=value file; either can be
overridden by trailing key=value arguments. Exit codes: 0 success, 1 usage or
configuration error, 2 numeric failure (non-finite loss, failed gradient
check), 3 file I/O or image parse error.
"""
from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigError, NumericError, PpmError, UsageError
from .network import PRESETS, ModelConfig, preset

_MODEL_FIELDS = {f.name: f for f in dataclasses.fields(ModelConfig)}


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as UsageError (exit code 1)."""

    def error(self, message):
        raise UsageError(message)


def _coerce(name: str, raw: str, typ):
    try:
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        if typ is bool:
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ is tuple:
            return tuple(int(v) for v in raw.split(",") if v)
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None


def _parse_kv_lines(text: str, origin: str) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{origin}:{lineno}: expected key=value, got {body!r}")
        key, val = body.split("=", 1)
        out[key.strip()] = val.strip()
    return out


def _config_dict(source: str, overrides: list[str]) -> dict[str, str]:
    """Merge a preset name or config file with key=value override args."""
    merged: dict[str, str] = {}
    if source in PRESETS:
        merged["preset"] = source
    else:
        path = Path(source)
        if not path.is_file():
            raise UsageError(
                f"--config {source!r} is neither a preset ({sorted(PRESETS)}) nor a file"
            )
        merged.update(_parse_kv_lines(path.read_text(), str(path)))
    for item in overrides:
        if "=" not in item:
            raise UsageError(f"override {item!r} is not key=value")
        key, val = item.split("=", 1)
        merged[key.strip()] = val.strip()
    return merged


def build_train_config(source: str, overrides: list[str]):
    from .training import TrainConfig

    raw = _config_dict(source, overrides)
    base_model = PRESETS[raw.pop("preset")] if "preset" in raw else ModelConfig()
    model_kw = {}
    train_kw = {}
    train_fields = {
        f.name: f for f in dataclasses.fields(TrainConfig) if f.name != "model"
    }
    for key, val in raw.items():
        if key in _MODEL_FIELDS:
            model_kw[key] = _coerce(key, val, type(getattr(base_model, key)))
        elif key in train_fields:
            default = TrainConfig.__dataclass_fields__[key].default
            typ = tuple if key == "milestones" else type(default)
            train_kw[key] = _coerce(key, val, typ)
        else:
            raise ConfigError(f"unknown config key {key!r}")
    model = dataclasses.replace(base_model, **model_kw)
    return TrainConfig(model=model, **train_kw).validate()


def _model_config(source: str, scale: int, overrides: list[str]) -> ModelConfig:
    raw = _config_dict(source, overrides)
    base = PRESETS[raw.pop("preset")] if "preset" in raw else ModelConfig()
    kw = {}
    for key, val in raw.items():
        if key not in _MODEL_FIELDS:
            raise ConfigError(f"unknown model config key {key!r}")
        kw[key] = _coerce(key, val, type(getattr(base, key)))
    kw.setdefault("scale", scale)
    return dataclasses.replace(base, **kw).validate()


def _parse_res(res: str) -> tuple[int, int]:
    try:
        w, h = res.lower().split("x")
        return int(w), int(h)
    except ValueError:
        raise UsageError(f"--res must be WxH, got {res!r}") from None


# -- subcommand handlers -------------------------------------------------------


def _cmd_train(args) -> int:
    from .training import load_train_checkpoint, train

    if args.resume:
        state = load_train_checkpoint(args.resume)
        if args.config or args.set:
            raise UsageError("--resume restores its own config; drop --config/overrides")
        src: object = state
    else:
        src = build_train_config(args.config or "tiny", args.set)
    state, history = train(
        src,
        log=lambda msg: print(msg, flush=True),
        checkpoint_path=args.out,
        checkpoint_interval=args.checkpoint_interval,
    )
    if args.log_csv:
        keys = ["iter", "loss", "lr", "train_psnr"]
        with open(args.log_csv, "w") as fp:
            fp.write(",".join(keys) + "\n")
            for rec in history:
                fp.write(",".join(str(rec.get(k, "")) for k in keys) + "\n")
    print(f"done: iteration {state.iteration}, checkpoint {args.out}")
    return 0


def _cmd_eval(args) -> int:
    from .checkpoint import load_model
    from .data import load_hr_images
    from .evaluate import bicubic_baseline, evaluate_images

    model = load_model(args.checkpoint)
    images = load_hr_images(args.data, seed=args.seed)
    tlc = args.tlc if args.tlc else None
    result = evaluate_images(model, images, model.cfg.scale, tlc_win=tlc)
    base = bicubic_baseline(images, model.cfg.scale)
    for row in result.per_image:
        print(f"image {row['index']}: PSNR {row['psnr']:.2f} dB  SSIM {row['ssim']:.4f}")
    print(f"model:   {result}")
    print(f"bicubic: {base}")
    return 0


def _cmd_sr(args) -> int:
    from .checkpoint import load_model
    from .evaluate import upscale
    from .ppm import ImageRGB8, read_ppm, write_ppm

    model = load_model(args.checkpoint)
    img = read_ppm(args.input)
    out = upscale(model, img.pixels, tlc_win=args.tlc if args.tlc else None)
    write_ppm(args.output, ImageRGB8(out))
    print(f"{args.input} ({img.width}x{img.height}) -> {args.output} "
          f"({out.shape[1]}x{out.shape[0]}, x{model.cfg.scale})")
    return 0


def _cmd_count(args) -> int:
    from .complexity import count_macs, render_csv, render_text, sensitivity_table

    cfg = _model_config(args.config, args.scale, args.set)
    out_w, out_h = _parse_res(args.res)
    report = count_macs(cfg, out_w, out_h)
    print(render_text(report, per_layer=args.per_layer), end="")
    if args.csv:
        Path(args.csv).write_text(render_csv(report))
        print(f"per-layer CSV written to {args.csv}")
    if args.sensitivity:
        print()
        print(sensitivity_table(cfg, out_w, out_h), end="")
    return 0


def _cmd_gradcheck(args) -> int:
    from .verification import run_gradcheck

    failures = run_gradcheck(args.module, seed=args.seed, eps=args.eps, log=print)
    if failures:
        raise NumericError(f"gradient check failed for: {', '.join(failures)}")
    return 0


def _cmd_ablate(args) -> int:
    from .benchmarks import run_ablation

    run_ablation(args.suite, iters=args.iters, log=print)
    return 0


def _cmd_synth(args) -> int:
    from .ppm import ImageRGB8, write_ppm
    from .synth import FAMILIES, synth_dataset

    families = tuple(args.families.split(",")) if args.families else FAMILIES
    out = Path(args.out)
    (out / "HR").mkdir(parents=True, exist_ok=True)
    images = synth_dataset(args.count, seed=args.seed, size=args.size, families=families)
    for i, img in enumerate(images):
        write_ppm(out / "HR" / f"{i:04d}.ppm", ImageRGB8(img))
    print(f"wrote {len(images)} images to {out / 'HR'}")
    return 0


def make_parser() -> _Parser:
    p = _Parser(prog="hybridsr", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a model")
    t.add_argument("--config", help="preset name or key=value config file")
    t.add_argument("--out", default="train_ckpt.bin", help="checkpoint path")
    t.add_argument("--resume", help="resume from a training checkpoint")
    t.add_argument("--checkpoint-interval", type=int, default=0)
    t.add_argument("--log-csv", help="write per-iteration metrics CSV")
    t.add_argument("set", nargs="*", metavar="key=value", help="config overrides")
    t.set_defaults(func=_cmd_train)

    e = sub.add_parser("eval", help="PSNR/SSIM of a checkpoint on a dataset")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True, help="synth:<n>x<size> or dir with HR/")
    e.add_argument("--tlc", type=int, nargs="?", const=48, default=0,
                   help="tile inference window (default 48 when flag given)")
    e.add_argument("--seed", type=int, default=0, help="seed for synth datasets")
    e.set_defaults(func=_cmd_eval)

    s = sub.add_parser("sr", help="upscale one PPM image")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--input", required=True)
    s.add_argument("--output", required=True)
    s.add_argument("--tlc", type=int, nargs="?", const=48, default=0)
    s.set_defaults(func=_cmd_sr)

    c = sub.add_parser("count", help="analytic parameter and MAC counts")
    c.add_argument("--config", default="full", help="preset name or config file")
    c.add_argument("--scale", type=int, default=4)
    c.add_argument("--res", default="1280x720", help="output resolution WxH")
    c.add_argument("--csv", help="write per-layer CSV here")
    c.add_argument("--per-layer", action="store_true")
    c.add_argument("--sensitivity", action="store_true",
                   help="append the design-grid sensitivity table")
    c.add_argument("set", nargs="*", metavar="key=value")
    c.set_defaults(func=_cmd_count)

    g = sub.add_parser("gradcheck", help="finite-difference gradient audit")
    g.add_argument("--module", required=True,
                   choices=["all", "mhdlsa", "sparsegsa", "hdtb", "rhdtg",
                            "network", "tiny"])
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--eps", type=float, default=1e-5)
    g.set_defaults(func=_cmd_gradcheck)

    a = sub.add_parser("ablate", help="desk-scale ablation suites")
    a.add_argument("--suite", required=True, choices=["hdtb", "attention", "local"])
    a.add_argument("--iters", type=int, default=0, help="override iteration budget")
    a.set_defaults(func=_cmd_ablate)

    y = sub.add_parser("synth", help="write a procedural HR dataset")
    y.add_argument("--out", required=True)
    y.add_argument("--count", type=int, default=8)
    y.add_argument("--size", type=int, default=64)
    y.add_argument("--seed", type=int, default=0)
    y.add_argument("--families", help="comma list: stripes,checker,blobs,mixed")
    y.set_defaults(func=_cmd_synth)
    return p


def main(argv=None) -> int:
    try:
        args = make_parser().parse_args(argv)
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 2
    except PpmError as exc:
        print(f"image error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
