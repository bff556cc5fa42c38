"""Adam parameter updates."""
from __future__ import annotations

from typing import Iterable

import numpy as np

from .tensor import Parameter


def adam_step(params: Iterable[Parameter], lr: float, beta1: float = 0.9, beta2: float = 0.999,
              epsilon: float = 1e-8) -> None:
    """One bias-corrected Adam update; gradients are left for the caller to reset."""
    for p in params:
        p.step += 1
        g = p.grad
        p.m = beta1 * p.m + (1 - beta1) * g
        p.v = beta2 * p.v + (1 - beta2) * (g * g)
        m_hat = p.m / (1 - beta1 ** p.step)
        v_hat = p.v / (1 - beta2 ** p.step)
        p.data = (p.data - lr * m_hat / (np.sqrt(v_hat) + epsilon)).astype(p.data.dtype, copy=False)


class Adam:
    """Thin stateful wrapper that remembers the parameter set and hyper-parameters."""

    def __init__(self, params: Iterable[Parameter], lr: float = 1e-4, betas=(0.9, 0.999),
                 eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        adam_step(self.params, self.lr, self.betas[0], self.betas[1], self.eps)
