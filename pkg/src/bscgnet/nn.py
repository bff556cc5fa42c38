"""Parameter containers for the network blocks."""
from __future__ import annotations

import math
from typing import Iterator, Optional

import numpy as np

from .core import ops
from .core.tensor import Parameter, Tensor, get_default_dtype


class Module:
    """Owns Parameters and child Modules discovered from instance attributes."""

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def _children(self) -> Iterator[tuple]:
        for name, value in vars(self).items():
            if isinstance(value, (Parameter, Module)):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, (Parameter, Module)):
                        yield f"{name}.{i}", item

    def named_parameters(self, prefix: str = "") -> Iterator[tuple]:
        seen: set = set()
        for name, p in self._named_parameters(prefix):
            if id(p) not in seen:
                seen.add(id(p))
                yield name, p

    def _named_parameters(self, prefix: str) -> Iterator[tuple]:
        for name, child in self._children():
            if isinstance(child, Parameter):
                yield prefix + name, child
            else:
                yield from child._named_parameters(prefix + name + ".")

    def parameters(self) -> list:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def astype(self, dtype) -> "Module":
        for p in self.parameters():
            p.astype(dtype)
        return self

    def state_dict(self) -> dict:
        return {name: p.data for name, p in self.named_parameters()}


def kaiming_normal(rng: np.random.Generator, shape: tuple, fan_in: int) -> np.ndarray:
    std = math.sqrt(2.0 / fan_in)
    return (rng.standard_normal(shape) * std).astype(get_default_dtype())


class Conv2d(Module):
    def __init__(self, in_ch: int, out_ch: int, kernel: int, rng: np.random.Generator,
                 padding: Optional[int] = None, dilation: int = 1, zero_init: bool = False):
        self.in_ch, self.out_ch, self.kernel = in_ch, out_ch, kernel
        self.dilation = dilation
        self.padding = dilation * (kernel // 2) if padding is None else padding
        shape = (out_ch, in_ch, kernel, kernel)
        if zero_init:
            w = np.zeros(shape, dtype=get_default_dtype())
        else:
            w = kaiming_normal(rng, shape, in_ch * kernel * kernel)
        self.weight = Parameter(w)
        self.bias = Parameter(np.zeros(out_ch, dtype=get_default_dtype()))

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias, padding=self.padding, dilation=self.dilation)


class ConvReLU(Conv2d):
    def forward(self, x: Tensor) -> Tensor:
        return ops.relu(super().forward(x))


class ConvTranspose2d(Module):
    def __init__(self, in_ch: int, out_ch: int, kernel: int, stride: int, rng: np.random.Generator):
        self.stride = stride
        # fan-in seen by one output pixel
        fan_in = max(1, in_ch * kernel * kernel // (stride * stride))
        self.weight = Parameter(kaiming_normal(rng, (in_ch, out_ch, kernel, kernel), fan_in))
        self.bias = Parameter(np.zeros(out_ch, dtype=get_default_dtype()))

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv_transpose2d(x, self.weight, self.bias, stride=self.stride)


def se_reduction(channels: int) -> int:
    return min(16, channels)


class SELayer(Module):
    """Squeeze-and-excitation with reduction ratio ``min(16, channels)``."""

    def __init__(self, channels: int, rng: np.random.Generator, reduction: Optional[int] = None):
        self.reduction = se_reduction(channels) if reduction is None else reduction
        hidden = max(1, channels // self.reduction)
        dt = get_default_dtype()
        self.w1 = Parameter(kaiming_normal(rng, (hidden, channels, 1, 1), channels))
        self.b1 = Parameter(np.zeros(hidden, dtype=dt))
        self.w2 = Parameter(kaiming_normal(rng, (channels, hidden, 1, 1), hidden))
        self.b2 = Parameter(np.zeros(channels, dtype=dt))

    def params(self) -> dict:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}

    def forward(self, x: Tensor) -> Tensor:
        return ops.se_layer(x, self.params(), self.reduction)
