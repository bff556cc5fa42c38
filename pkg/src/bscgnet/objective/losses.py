"""Hybrid BCE + IoU loss with deep supervision."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Union

import numpy as np
from scipy.special import expit

from ..core import ops
from ..core.tensor import ShapeError, Tensor, make_node

EPS = 1e-7

ArrayLike = Union[np.ndarray, Tensor]


def _target(y: ArrayLike, p: Tensor, op: str) -> np.ndarray:
    y = y.data if isinstance(y, Tensor) else np.asarray(y)
    if y.shape != p.shape:
        raise ShapeError(f"{op}: prediction {p.shape} and target {y.shape} differ in shape")
    return y.astype(p.dtype, copy=False)


def bce_loss(p: Tensor, y: ArrayLike) -> Tensor:
    """Mean binary cross-entropy of probabilities clamped to ``[EPS, 1 - EPS]``."""
    yd = _target(y, p, "bce_loss")
    pc = np.clip(p.data, EPS, 1 - EPS)
    active = (p.data >= EPS) & (p.data <= 1 - EPS)
    n = p.data.size
    out = np.asarray(-(yd * np.log(pc) + (1 - yd) * np.log(1 - pc)).mean())

    def backward_fn(g):
        return (g * active * ((pc - yd) / (pc * (1 - pc))) / n,)

    return make_node(out, (p,), backward_fn)


# logit bounds equivalent to clamping p to [EPS, 1 - EPS]
_LOGIT_MAX = float(np.log((1 - EPS) / EPS))


def bce_with_logits(z: Tensor, y: ArrayLike) -> Tensor:
    """``bce_loss(sigmoid(z), y)`` evaluated stably from logits.

    Uses ``-log p = softplus(-z)`` and ``-log(1 - p) = softplus(z)`` with z clamped
    to the logit range matching the probability clamp. Same value in exact arithmetic,
    but without the cancellation in ``1 - sigmoid(z)`` for large logits.
    """
    yd = _target(y, z, "bce_loss")
    zc = np.clip(z.data, -_LOGIT_MAX, _LOGIT_MAX)
    active = (z.data >= -_LOGIT_MAX) & (z.data <= _LOGIT_MAX)
    n = z.data.size
    out = np.asarray((yd * np.logaddexp(0, -zc) + (1 - yd) * np.logaddexp(0, zc)).mean())

    def backward_fn(g):
        return (g * active * (expit(zc) - yd) / n,)

    return make_node(out, (z,), backward_fn)


def iou_loss(p: Tensor, y: ArrayLike) -> Tensor:
    """Soft IoU complement per image, averaged over the batch."""
    yd = _target(y, p, "iou_loss")
    axes = tuple(range(1, p.data.ndim))
    pd = p.data
    inter = (pd * yd).sum(axis=axes)
    union = (pd + yd - pd * yd).sum(axis=axes) + EPS
    out = np.asarray((1 - inter / union).mean())
    nb = pd.shape[0]
    expand = (slice(None),) + (None,) * len(axes)

    def backward_fn(g):
        # d/dp of -inter/union per image
        d_inter = yd
        d_union = 1 - yd
        grad = -(d_inter * union[expand] - inter[expand] * d_union) / (union[expand] ** 2)
        return (g * grad / nb,)

    return make_node(out, (p,), backward_fn)


@dataclass
class LossTerms:
    joint: Tensor
    bce: float
    iou: float
    per_output: List[dict] = field(default_factory=list)


def joint_loss(maps, y: ArrayLike, use_iou: bool = True,
               expected: Optional[int] = None) -> LossTerms:
    """Sum over supervised logit maps of BCE (+ IoU) on their sigmoids, weights all 1."""
    maps = list(getattr(maps, "maps", maps))
    if expected is not None and len(maps) != expected:
        raise ShapeError(f"joint_loss: expected {expected} supervised outputs, got {len(maps)}")
    if not maps:
        raise ShapeError("joint_loss: no supervised outputs")
    total, bce_sum, iou_sum, per = None, 0.0, 0.0, []
    for logits in maps:
        p = ops.sigmoid(logits)
        b = bce_with_logits(logits, y)
        term = b
        rec = {"bce": float(b.data)}
        if use_iou:
            i = iou_loss(p, y)
            term = ops.add(b, i)
            rec["iou"] = float(i.data)
            iou_sum += rec["iou"]
        rec["joint"] = float(term.data)
        bce_sum += rec["bce"]
        per.append(rec)
        total = term if total is None else ops.add(total, term)
    return LossTerms(total, bce_sum, iou_sum, per)
