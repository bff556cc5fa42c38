"""Central finite-difference gradient checking."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .tensor import Tensor, backward


@dataclass
class GradCheckResult:
    max_rel_error: float
    n_checked: int
    worst: Optional[tuple] = None

    def passed(self, tol: float = 1e-4) -> bool:
        return self.max_rel_error <= tol


def relative_error(analytic: float, numeric: float, floor: float = 1e-8) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


FALLBACK_STEPS = (1e-5, 1e-4, 1e-3)


def gradcheck(fn: Callable[[], Tensor], inputs: Sequence[Tensor], eps: float = 1e-6,
              max_entries: Optional[int] = None, rng: Optional[np.random.Generator] = None,
              floor: float = 1e-8, tol: float = 1e-4,
              fallback_steps: Sequence[float] = FALLBACK_STEPS) -> GradCheckResult:
    """Compare analytic gradients of the scalar ``fn()`` against central differences.

    ``inputs`` must be float64 leaves with ``requires_grad``. When ``max_entries``
    is set, that many randomly chosen entries per input are probed instead of all.

    An entry whose central difference at ``eps`` misses ``tol`` is re-probed and
    keeps its smallest error: first the two one-sided differences at ``eps`` (the
    analytic gradient of a piecewise op is the slope of the current piece, so
    next to a kink of ReLU, pooling or a warp only one side agrees), then central
    differences at the larger ``fallback_steps`` (where the gradient is tiny next
    to ``fn()``, e.g. behind a saturated gate, small steps drown in round-off).
    A wrong gradient fails every probe.
    """
    rng = rng or np.random.default_rng(0)
    for t in inputs:
        if t.data.dtype != np.float64:
            raise TypeError("gradcheck needs float64 inputs")
        t.zero_grad()
    loss = fn()
    for t in inputs:
        if t.grad is None or not isinstance(t.grad, np.ndarray) or t.grad.shape != t.shape:
            t.grad = np.zeros_like(t.data)
    backward(loss)
    analytic = [np.array(t.grad, copy=True) for t in inputs]

    worst, worst_err, count = None, 0.0, 0
    for k, t in enumerate(inputs):
        flat = t.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = rng.choice(flat.size, size=max_entries, replace=False)
        for i in idx:
            a = float(analytic[k].reshape(-1)[i])
            err, numeric = np.inf, None
            probes = [(eps, 0), (eps, 1), (eps, -1)] + [(s, 0) for s in fallback_steps]
            for step, side in probes:
                num = _difference(fn, flat, i, step, side)
                e = relative_error(a, num, floor)
                if e < err:
                    err, numeric = e, num
                if err <= tol:
                    break
            count += 1
            if err > worst_err or worst is None:
                worst_err, worst = err, (k, int(i), a, numeric)
    return GradCheckResult(worst_err, count, worst)


def _difference(fn, flat: np.ndarray, i: int, step: float, side: int = 0) -> float:
    """Central (``side=0``), forward (``1``) or backward (``-1``) difference."""
    orig = flat[i]
    flat[i] = orig + step if side >= 0 else orig
    up = float(fn().data)
    flat[i] = orig - step if side <= 0 else orig
    down = float(fn().data)
    flat[i] = orig
    return (up - down) / (step if side else 2 * step)
