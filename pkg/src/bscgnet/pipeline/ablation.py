"""Train and score every ablation row on one dataset."""
from __future__ import annotations

import json
from pathlib import Path
from typing import List, Optional

import numpy as np

from ..network import ABLATION_ROWS, ModelConfig, count_params
from ..objective.metrics import aggregate, evaluate_pair
from .augment import AugmentConfig
from .data import load_dataset, to_batch
from .train import TrainConfig, train


def run_ablation(data_dir, epochs: int = 12, size: int = 64, seed: int = 0, lr: float = 1e-3,
                 batch_size: int = 8, holdout: float = 0.25, preset: str = "tiny",
                 out_dir: Optional[str] = None, rows=None) -> List[dict]:
    """Train each row on the leading files and score it on the held-out tail."""
    data_dir = Path(data_dir)
    samples = load_dataset(data_dir / "images", data_dir / "masks", size)
    n_test = max(1, int(round(len(samples) * holdout)))
    train_set, test_set = samples[:-n_test] or samples, samples[-n_test:]
    images, masks = to_batch(test_set)
    results = []
    for row in rows or ABLATION_ROWS:
        model_cfg = ModelConfig.ablation(row, preset=preset, input_size=size)
        cfg = TrainConfig(model=model_cfg, lr=lr, batch_size=batch_size, epochs=epochs,
                          decay_every=0, input_size=size, seed=seed,
                          augment=AugmentConfig.disabled())
        run = train(cfg, samples=train_set, write=False)
        probs = np.concatenate([run.model.predict(images[i:i + batch_size])
                                for i in range(0, len(images), batch_size)])
        # score the 8-bit quantised maps, as the file-based path would
        probs = np.round(probs * 255) / 255
        report = aggregate([evaluate_pair(s.name, p[0], m[0])
                            for s, p, m in zip(test_set, probs, masks)])
        results.append({"row": row, "bpc": model_cfg.use_bpc, "dffc": model_cfg.use_dffc,
                        "afr": model_cfg.use_afr, "loss": "B+I" if model_cfg.use_iou_loss else "B",
                        "params": count_params(model_cfg), "steps": run.steps,
                        "train_loss": run.history[-1]["loss"], **report.means})
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "ablation.json").write_text(json.dumps(results, indent=2))
        (out / "ablation.txt").write_text(format_table(results) + "\n")
    return results


def format_table(rows: List[dict]) -> str:
    head = f"{'No.':>3} {'BPC':>5} {'DFFC':>5} {'AFR':>5} {'Loss':>5} {'Params':>9} {'MAE':>8} {'S':>8} {'maxF':>8}"
    lines = [head]
    for r in rows:
        lines.append(f"{r['row']:>3} {r['bpc']!s:>5} {r['dffc']!s:>5} {r['afr']!s:>5} {r['loss']:>5} "
                     f"{r['params']:>9,d} {r['mae']:>8.4f} {r['s_measure']:>8.4f} {r['max_f']:>8.4f}")
    by_row = {r["row"]: r for r in rows}
    if 1 in by_row and 6 in by_row:
        ok = by_row[6]["mae"] <= by_row[1]["mae"]
        lines.append(f"full model MAE {'<=' if ok else '>'} baseline MAE "
                     f"({by_row[6]['mae']:.4f} vs {by_row[1]['mae']:.4f}); expectation only, not a gate")
    return "\n".join(lines)
