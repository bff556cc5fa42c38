"""Saliency evaluation: MAE, max F-measure with threshold curves, S-measure.

The structure measure follows the widely used reference definition:

* object term: for the foreground (prediction inside GT) and background
  (inverted prediction outside GT) regions, ``2 m / (m^2 + 1 + s + eps)``
  with ``m`` the region mean and ``s`` its sample standard deviation, mixed
  by the GT foreground ratio;
* region term: the maps are split into four blocks at the rounded GT
  centroid (1-based, as in the original MATLAB code) and each block scores
  ``4 mx my sxy / ((mx^2 + my^2)(sx + sy) + eps)``, returning 1 when both
  numerator and denominator vanish and 0 when only the numerator does;
  blocks are weighted by area;
* all-background GT scores ``1 - mean(S)``, all-foreground GT ``mean(S)``;
  the combined value is clipped to ``[0, 1]``.

Predictions are used as given (no min-max renormalisation).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np

from ..core.tensor import ShapeError

N_THRESHOLDS = 256
BETA2 = 0.3
_EPS = np.finfo(np.float64).eps


def _pair(s, g, op: str) -> tuple:
    s = np.asarray(s, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if s.shape != g.shape:
        raise ShapeError(f"{op}: prediction {s.shape} and ground truth {g.shape} differ in shape")
    return s, g


def mae(s, g) -> float:
    """Mean absolute error; the sum is correctly rounded, so it is order independent."""
    s, g = _pair(s, g, "mae")
    return math.fsum(np.abs(s - g).ravel().tolist()) / s.size


def f_measure_curve(s, g, beta2: float = BETA2) -> dict:
    """Precision, recall and F for thresholds ``t/255``, t = 0..255 (salient iff ``s > t/255``)."""
    s, g = _pair(s, g, "f_measure_curve")
    gt = g > 0.5
    thresholds = np.arange(N_THRESHOLDS) / 255.0
    fg = np.sort(s[gt])
    bg = np.sort(s[~gt])
    tp = fg.size - np.searchsorted(fg, thresholds, side="right")
    fp = bg.size - np.searchsorted(bg, thresholds, side="right")
    predicted = tp + fp
    precision = np.divide(tp, predicted, out=np.zeros(N_THRESHOLDS), where=predicted > 0)
    recall = tp / fg.size if fg.size else np.zeros(N_THRESHOLDS)
    f = f_beta(precision, recall, beta2)
    return {"precision": precision, "recall": recall, "f": f, "max_f": float(f.max())}


def f_beta(precision, recall, beta2: float = BETA2):
    precision = np.asarray(precision, dtype=np.float64)
    recall = np.asarray(recall, dtype=np.float64)
    den = beta2 * precision + recall
    num = (1 + beta2) * precision * recall
    return np.divide(num, den, out=np.zeros(np.broadcast(num, den).shape), where=den > 0)


def _object_score(values: np.ndarray) -> float:
    if values.size == 0:
        return 0.0
    mean = values.mean()
    std = values.std(ddof=1) if values.size > 1 else 0.0
    return float(2 * mean / (mean * mean + 1 + std + _EPS))


def s_object(s: np.ndarray, gt: np.ndarray) -> float:
    ratio = gt.mean()
    fg = _object_score((s * gt)[gt])
    bg = _object_score(((1 - s) * (~gt))[~gt])
    return float(ratio * fg + (1 - ratio) * bg)


def _ssim(s: np.ndarray, g: np.ndarray) -> float:
    n = s.size
    mx, my = s.mean(), g.mean()
    if n > 1:
        sx = ((s - mx) ** 2).sum() / (n - 1)
        sy = ((g - my) ** 2).sum() / (n - 1)
        sxy = ((s - mx) * (g - my)).sum() / (n - 1)
    else:
        sx = sy = sxy = 0.0
    alpha = 4 * mx * my * sxy
    beta = (mx * mx + my * my) * (sx + sy)
    if alpha != 0:
        return float(alpha / (beta + _EPS))
    if beta == 0:
        return 1.0
    return 0.0


def centroid(gt: np.ndarray) -> tuple:
    """1-based ``(x, y)`` split point used by the region term."""
    h, w = gt.shape
    if not gt.any():
        x, y = np.round(w / 2), np.round(h / 2)
    else:
        y, x = np.argwhere(gt).mean(axis=0).round()
    return int(x) + 1, int(y) + 1


def s_region(s: np.ndarray, gt: np.ndarray) -> float:
    h, w = gt.shape
    x, y = centroid(gt)
    g = gt.astype(np.float64)
    total = 0.0
    for rows, cols in ((slice(0, y), slice(0, x)), (slice(0, y), slice(x, w)),
                       (slice(y, h), slice(0, x)), (slice(y, h), slice(x, w))):
        block = s[rows, cols]
        if block.size == 0:
            continue
        total += block.size / (h * w) * _ssim(block, g[rows, cols])
    return float(total)


def s_measure(s, g, alpha: float = 0.5, components: bool = False):
    s, g = _pair(s, g, "s_measure")
    if s.ndim != 2:
        raise ShapeError(f"s_measure: expects 2-D maps, got {s.shape}")
    gt = g > 0.5
    ratio = gt.mean()
    if ratio == 0:
        value, so, sr = 1 - s.mean(), None, None
    elif ratio == 1:
        value, so, sr = s.mean(), None, None
    else:
        so, sr = s_object(s, gt), s_region(s, gt)
        value = alpha * so + (1 - alpha) * sr
    value = float(np.clip(value, 0.0, 1.0))
    if components:
        return value, so, sr
    return value


@dataclass
class ImageRecord:
    name: str
    mae: float
    s_measure: float
    max_f: float
    precision: np.ndarray
    recall: np.ndarray
    f_curve: np.ndarray


def evaluate_pair(name: str, s, g) -> ImageRecord:
    s, g = _pair(s, g, "evaluate_pair")
    s = np.squeeze(s)
    g = np.squeeze(g)
    curve = f_measure_curve(s, g)
    return ImageRecord(name, mae(s, g), s_measure(s, g), curve["max_f"], curve["precision"],
                       curve["recall"], curve["f"])


@dataclass
class MetricsReport:
    records: List[ImageRecord]
    means: Dict[str, float] = field(default_factory=dict)
    mae_quartiles: Dict[str, float] = field(default_factory=dict)
    mean_precision: np.ndarray = None
    mean_recall: np.ndarray = None
    mean_f: np.ndarray = None

    def summary(self) -> dict:
        return {"count": len(self.records), "means": self.means,
                "mae_quartiles": self.mae_quartiles,
                "max_mean_f": float(self.mean_f.max())}


def aggregate(records: Sequence[ImageRecord]) -> MetricsReport:
    records = sorted(records, key=lambda r: r.name)
    if not records:
        raise ValueError("aggregate: no per-image records")
    maes = np.array([r.mae for r in records])
    means = {"mae": float(maes.mean()),
             "s_measure": float(np.mean([r.s_measure for r in records])),
             "max_f": float(np.mean([r.max_f for r in records]))}
    q = np.percentile(maes, [0, 25, 50, 75, 100])
    quart = dict(zip(("min", "q1", "median", "q3", "max"), map(float, q)))
    return MetricsReport(
        records, means, quart,
        np.mean([r.precision for r in records], axis=0),
        np.mean([r.recall for r in records], axis=0),
        np.mean([r.f_curve for r in records], axis=0),
    )
