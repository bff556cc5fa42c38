"""Parameter/FLOP report set against the published full-model figures."""
from __future__ import annotations

from dataclasses import replace

from .network import (ABLATION_ROWS, PAPER_BPC_PARAMS_M, PAPER_FLOPS_G, PAPER_PARAMS_M,
                      ModelConfig, count_params, estimate_flops, module_params)

PARAM_BAND = 0.25
FLOP_BAND = 0.35

EXPLANATION = """\
Notes on the comparison:
  * Internal widths beyond the VGG16 encoder are not published. Calibration,
    decoder and refinement branches here all run at one common width
    (64 at paper scale), so the decoder is far lighter than the published
    baseline (25.69M there vs. ~15M here); the parameter gap sits almost
    entirely in the decoder.
  * FLOPs count one multiply-add as two operations, plus resizes and
    elementwise ops; the published convention is unknown. Most of the
    cost comes from the VGG16 convolutions and the full-resolution
    calibration branch.
  * These figures are diagnostics only; they do not gate anything."""


def diagnostics(size: int = 256) -> dict:
    full = ModelConfig(preset="paper", input_size=size)
    base = ModelConfig.ablation(1, preset="paper", input_size=size)
    with_bpc = ModelConfig.ablation(2, preset="paper", input_size=size)
    params = count_params(full)
    flops = estimate_flops(full, size)
    bpc_inc = count_params(with_bpc) - count_params(base)
    return {
        "params": params,
        "params_rel_dev": params / (PAPER_PARAMS_M * 1e6) - 1,
        "flops": flops,
        "flops_rel_dev": flops / (PAPER_FLOPS_G * 1e9) - 1,
        "bpc_increment": bpc_inc,
        "bpc_rel_dev": bpc_inc / (PAPER_BPC_PARAMS_M * 1e6) - 1,
    }


def summary_table(config: ModelConfig, size: int = 256) -> str:
    lines = [f"configuration: preset={config.preset} width={config.width} "
             f"bpc={config.use_bpc} dffc={config.use_dffc} afr={config.use_afr} input={size}x{size}"]
    parts = module_params(config)
    total = sum(parts.values())
    lines.append(f"{'module':<10} {'params':>12}")
    for name, n in parts.items():
        lines.append(f"{name:<10} {n:>12,d}")
    lines.append(f"{'total':<10} {total:>12,d}")
    lines.append(f"forward FLOPs at {size}x{size}: {estimate_flops(config, size) / 1e9:.2f} G")
    lines.append("")
    lines.append("ablation rows (same preset and width):")
    lines.append(f"{'row':>3} {'bpc':>5} {'dffc':>5} {'afr':>5} {'loss':>5} {'params(M)':>10} {'FLOPs(G)':>9}")
    for row, (bpc, dffc, afr, iou) in ABLATION_ROWS.items():
        cfg = replace(config, use_bpc=bpc, use_dffc=dffc, use_afr=afr, use_iou_loss=iou)
        lines.append(f"{row:>3} {bpc!s:>5} {dffc!s:>5} {afr!s:>5} {'B+I' if iou else 'B':>5} "
                     f"{count_params(cfg) / 1e6:>10.3f} {estimate_flops(cfg, size) / 1e9:>9.2f}")
    if config.preset == "paper":
        d = diagnostics(size)
        lines.append("")
        lines.append("against the published full model (soft diagnostics):")
        lines.append(f"  params  {d['params'] / 1e6:7.2f} M vs {PAPER_PARAMS_M} M  "
                     f"({d['params_rel_dev']:+.1%}, band ±{PARAM_BAND:.0%}: "
                     f"{'inside' if abs(d['params_rel_dev']) <= PARAM_BAND else 'outside'})")
        lines.append(f"  FLOPs   {d['flops'] / 1e9:7.2f} G vs {PAPER_FLOPS_G} G  "
                     f"({d['flops_rel_dev']:+.1%}, band ±{FLOP_BAND:.0%}: "
                     f"{'inside' if abs(d['flops_rel_dev']) <= FLOP_BAND else 'outside'})")
        lines.append(f"  BPC increment {d['bpc_increment'] / 1e6:.3f} M vs {PAPER_BPC_PARAMS_M} M "
                     f"({d['bpc_rel_dev']:+.1%})")
        lines.append(EXPLANATION)
    return "\n".join(lines)
