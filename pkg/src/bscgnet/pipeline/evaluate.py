"""Directory-level evaluation and report files."""
from __future__ import annotations

import csv
import json
from pathlib import Path

from ..objective.metrics import MetricsReport, aggregate, evaluate_pair
from .data import DataError, binarize, list_pngs, read_gray


def evaluate_dirs(pred_dir, gt_dir) -> MetricsReport:
    preds = {p.stem: p for p in list_pngs(pred_dir)}
    gts = {p.stem: p for p in list_pngs(gt_dir)}
    if not gts:
        raise DataError(f"no samples: {gt_dir} contains no .png masks")
    problems = [f"{s}: no prediction" for s in sorted(set(gts) - set(preds))]
    problems += [f"{s}: no ground truth" for s in sorted(set(preds) - set(gts))]
    records = []
    for stem in sorted(set(preds) & set(gts)):
        s, g = read_gray(preds[stem]), binarize(read_gray(gts[stem]))
        if s.shape != g.shape:
            problems.append(f"{stem}: prediction {s.shape} vs ground truth {g.shape}")
            continue
        records.append(evaluate_pair(stem, s, g))
    if problems:
        raise DataError("unmatched or inconsistent files:\n  " + "\n  ".join(problems))
    return aggregate(records)


def write_report(report: MetricsReport, out_dir) -> dict:
    """Write ``per_image.csv``, ``aggregate.json`` and ``curves.csv`` (256 rows)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "per_image.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["stem", "mae", "s_measure", "max_f"])
        for r in report.records:
            w.writerow([r.name, repr(r.mae), repr(r.s_measure), repr(r.max_f)])
    with open(out / "curves.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["threshold", "precision", "recall", "f"])
        for t in range(len(report.mean_f)):
            w.writerow([t, repr(float(report.mean_precision[t])), repr(float(report.mean_recall[t])),
                        repr(float(report.mean_f[t]))])
    summary = report.summary()
    (out / "aggregate.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    return summary


def evaluate(pred_dir, gt_dir, out_dir) -> MetricsReport:
    report = evaluate_dirs(pred_dir, gt_dir)
    write_report(report, out_dir)
    return report
