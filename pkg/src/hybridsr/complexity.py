"""Analytic parameter and multiply-accumulate (MAC) counting.

Conventions, fixed so numbers are comparable across published tables:
  - 1 MAC = 1 FLOP (the common convention in SR complexity tables; verified
    against the EDSR x4 reference point, see `edsr_x4_macs`);
  - convolutions: out_h * out_w * cout * (cin/groups) * k^2;
  - dynamic aggregation: h * w * c * k^2;
  - channel attention: 2 * h * w * c^2 / heads (score and mix matmuls);
  - windowed spatial attention: 2 * h * w * win^2 * c;
  - layer norms, activations, elementwise adds, and pixel shuffles are
    excluded (sub-percent at these shapes).

All single-stage model layers run at LR resolution, computed per output
axis as ceil(out / scale) so off-grid output sizes (e.g. 1280 at x3) count
the LR grid that would actually produce at least that output.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass

from .errors import ConfigError
from .network import ModelConfig

WINDOW_MHSA = 8  # window used by the spatial-attention ablation variant


@dataclass
class CostRow:
    name: str
    params: int
    macs: int


@dataclass
class CostReport:
    rows: list[CostRow]
    lr_h: int = 0
    lr_w: int = 0
    out_h: int = 0
    out_w: int = 0

    @property
    def total_params(self) -> int:
        return sum(r.params for r in self.rows)

    @property
    def total_macs(self) -> int:
        return sum(r.macs for r in self.rows)


def _layers(cfg: ModelConfig, hw: int):
    """Yield (name, params, macs) mirroring build_model's structure exactly."""
    c = cfg.channels
    heads = cfg.heads
    k2 = cfg.kernel_size**2
    cs = int(round(c * cfg.squeeze_ratio))
    hidden = int(round(c * cfg.ffn_expansion))

    def conv(name, cin, cout, k, at=hw):
        yield name, cin * cout * k * k + cout, at * cout * cin * k * k

    def dwconv(name, ch, k, at=hw):
        yield name, ch * k * k + ch, at * ch * k * k

    def norm(name):
        yield name, 2 * c, 0

    def ffn(prefix):
        yield from norm(f"{prefix}.norm")
        yield from conv(f"{prefix}.expand", c, 2 * hidden, 1)
        yield from dwconv(f"{prefix}.mix", 2 * hidden, 3)
        yield from conv(f"{prefix}.project", hidden, c, 1)

    def local_block(prefix):
        if cfg.local_variant == "mhsa":
            yield from norm(f"{prefix}.norm")
            yield from conv(f"{prefix}.qkv", c, 3 * c, 1)
            yield f"{prefix}.attention", 0, 2 * hw * WINDOW_MHSA**2 * c
            yield from conv(f"{prefix}.project", c, c, 1)
        else:
            yield from norm(f"{prefix}.norm")
            yield from conv(f"{prefix}.squeeze", c, cs, 1)
            yield from dwconv(f"{prefix}.context", cs, 7)
            yield from conv(f"{prefix}.kernels", cs, heads * k2, 1)
            yield f"{prefix}.aggregate", 0, hw * c * k2
        yield from ffn(f"{prefix}.ffn")

    def global_block(prefix):
        yield from norm(f"{prefix}.norm")
        yield from conv(f"{prefix}.qkv_point", c, 3 * c, 1)
        yield from dwconv(f"{prefix}.qkv_depth", 3 * c, 3)
        yield f"{prefix}.log_alpha", heads, 0
        yield f"{prefix}.attention", 0, 2 * hw * c * c // heads
        yield from conv(f"{prefix}.project", c, c, 1)
        yield from ffn(f"{prefix}.ffn")

    yield from conv("head", 3, c, 3)
    for g in range(cfg.num_groups):
        for b in range(cfg.blocks_per_group):
            prefix = f"groups.{g}.blocks.{b}"
            if cfg.block_mix == "hybrid":
                yield from local_block(f"{prefix}.first")
                yield from global_block(f"{prefix}.second")
            elif cfg.block_mix == "local_only":
                yield from local_block(f"{prefix}.first")
                yield from local_block(f"{prefix}.second")
            else:
                yield from global_block(f"{prefix}.first")
                yield from global_block(f"{prefix}.second")
        yield from conv(f"groups.{g}.fuse", c, c, 3)
    yield from conv("tail", c, 3 * cfg.scale**2, 3)


def count_params(cfg: ModelConfig) -> CostReport:
    cfg.validate()
    rows = [CostRow(n, p, 0) for n, p, _ in _layers(cfg, 0)]
    return CostReport(rows)


def count_macs(cfg: ModelConfig, out_w: int, out_h: int) -> CostReport:
    """Cost of producing an out_w x out_h RGB output (MACs at LR resolution)."""
    cfg.validate()
    if out_w < cfg.scale or out_h < cfg.scale:
        raise ConfigError(f"output {out_w}x{out_h} smaller than one LR pixel")
    lr_w = math.ceil(out_w / cfg.scale)
    lr_h = math.ceil(out_h / cfg.scale)
    rows = [CostRow(n, p, m) for n, p, m in _layers(cfg, lr_h * lr_w)]
    return CostReport(rows, lr_h=lr_h, lr_w=lr_w, out_h=out_h, out_w=out_w)


def edsr_x4_macs(out_w: int = 1280, out_h: int = 720) -> int:
    """Reference point for the MAC=FLOP convention: EDSR x4 at 1280x720.

    Standard EDSR layout (256 channels, 32 residual blocks, two-stage
    pixel-shuffle upsampler). Published tables put this at ~2895 GMac, which
    this function reproduces, anchoring our counting rules.
    """
    lr_w, lr_h = out_w // 4, out_h // 4
    c = 256
    total = lr_h * lr_w * c * 3 * 9  # head
    total += 32 * 2 * lr_h * lr_w * c * c * 9  # residual blocks
    total += lr_h * lr_w * c * c * 9  # body-end conv
    total += lr_h * lr_w * (4 * c) * c * 9  # up-stage 1 conv (then shuffle)
    total += (2 * lr_h) * (2 * lr_w) * (4 * c) * c * 9  # up-stage 2 conv
    total += out_h * out_w * 3 * c * 9  # final RGB conv
    return total


def render_text(report: CostReport, per_layer: bool = False) -> str:
    out = io.StringIO()
    if report.out_w:
        out.write(
            f"output {report.out_w}x{report.out_h}"
            f" (LR grid {report.lr_w}x{report.lr_h})\n"
        )
    if per_layer:
        width = max(len(r.name) for r in report.rows)
        for r in report.rows:
            out.write(f"{r.name:<{width}}  {r.params:>12,}  {r.macs / 1e9:>10.3f} G\n")
    out.write(f"total params: {report.total_params:,}\n")
    if report.out_w:
        out.write(f"total MACs:   {report.total_macs / 1e9:.1f} G\n")
    return out.getvalue()


def render_csv(report: CostReport) -> str:
    lines = ["layer,params,macs"]
    lines += [f"{r.name},{r.params},{r.macs}" for r in report.rows]
    lines.append(f"total,{report.total_params},{report.total_macs}")
    return "\n".join(lines) + "\n"


def sensitivity_table(
    base: ModelConfig, out_w: int = 1280, out_h: int = 720
) -> str:
    """Params/MACs over the design grid (kernel, squeeze, ffn expansion)."""
    from dataclasses import replace

    out = io.StringIO()
    out.write("kernel  squeeze  ffn_exp      params       MACs(G)\n")
    for k in (3, 5):
        for sq in (0.25, 0.5, 1.0):
            for e in (2.0, 2.66):
                cfg = replace(base, kernel_size=k, squeeze_ratio=sq, ffn_expansion=e)
                sqc = cfg.channels * sq
                if abs(sqc - round(sqc)) > 1e-9:
                    continue
                rep = count_macs(cfg, out_w, out_h)
                out.write(
                    f"{k:>6}  {sq:>7.2f}  {e:>7.2f}  {rep.total_params:>10,}"
                    f"  {rep.total_macs / 1e9:>12.1f}\n"
                )
    return out.getvalue()
