"""Boundary protection calibration.

Adjacent encoder levels are brought to full resolution and a common width,
a flow field between them is predicted from their SE-gated concatenation,
and the deeper level is warped by that flow and added onto the running
carry. Three such steps turn E1..E4 into I1, I2, I3 (I3 is the boundary
map handed on to the attention and fusion stages).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List

import numpy as np

from .backbone import EncoderPyramid
from .core import ops
from .core.tensor import ShapeError, Tensor
from .nn import Conv2d, ConvReLU, Module, SELayer


class ResidualBlock(Module):
    """``y = x + ConvReLU(ConvReLU(x))`` with 3x3, channel-preserving convolutions."""

    def __init__(self, channels: int, rng: np.random.Generator):
        self.channels = channels
        self.conv1 = ConvReLU(channels, channels, 3, rng)
        self.conv2 = ConvReLU(channels, channels, 3, rng)

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[1] != self.channels:
            raise ShapeError(f"residual_block: expected {self.channels} channels, got {x.shape}")
        return ops.add(x, self.conv2(self.conv1(x)))


def residual_block(x: Tensor, block: ResidualBlock) -> Tensor:
    return block(x)


def project(x: Tensor, conv: Conv2d) -> Tensor:
    """1x1 projection to the common calibration width."""
    return conv(x)


def afa(refined: Tensor, next_proj: Tensor, se: SELayer) -> Tensor:
    """Adjacent-feature attention: SE gate over the concatenated pair."""
    if refined.shape != next_proj.shape:
        raise ShapeError(f"afa: operands differ in shape, {refined.shape} vs {next_proj.shape}")
    return se(ops.concat_channels([refined, next_proj]))


def predict_flow(fused: Tensor, conv: Conv2d) -> Tensor:
    return conv(fused)


def calibrate_step(next_proj: Tensor, flow: Tensor, carry: Tensor) -> Tensor:
    """Warp the deeper level by the flow and add it onto the carry."""
    if next_proj.shape != carry.shape:
        raise ShapeError(f"calibrate_step: next level {next_proj.shape} and carry {carry.shape} differ")
    return ops.add(ops.grid_sample(next_proj, flow), carry)


@dataclass
class CalibrationState:
    carries: List[Tensor] = field(default_factory=list)
    refined: List[Tensor] = field(default_factory=list)
    fused: List[Tensor] = field(default_factory=list)
    flows: List[Tensor] = field(default_factory=list)
    outputs: List[Tensor] = field(default_factory=list)
    projected: List[Tensor] = field(default_factory=list)

    @property
    def i3(self) -> Tensor:
        return self.outputs[2]

    m1 = i3


class BPC(Module):
    def __init__(self, widths, channels: int, rng: np.random.Generator):
        self.channels = channels
        self.proj = [Conv2d(w, channels, 1, rng) for w in widths[:4]]
        # res[0] refines E1; res[1], res[2] refine I1, I2 before the next flow estimate
        self.res = [ResidualBlock(channels, rng) for _ in range(3)]
        self.se = [SELayer(2 * channels, rng) for _ in range(3)]
        self.flow = [Conv2d(2 * channels, 2, 3, rng, zero_init=True) for _ in range(3)]

    def forward(self, pyramid: EncoderPyramid) -> CalibrationState:
        full = pyramid.e1.shape
        state = CalibrationState()
        # a 1x1 conv commutes with bilinear resizing, so project at native scale
        state.projected = [ops.resize_to(project(e, conv), full)
                           for e, conv in zip(pyramid[:4], self.proj)]
        carry = residual_block(state.projected[0], self.res[0])
        for k in range(3):
            refined = carry if k == 0 else residual_block(carry, self.res[k])
            fused = afa(refined, state.projected[k + 1], self.se[k])
            flow = predict_flow(fused, self.flow[k])
            out = calibrate_step(state.projected[k + 1], flow, carry)
            state.carries.append(carry)
            state.refined.append(refined)
            state.fused.append(fused)
            state.flows.append(flow)
            state.outputs.append(out)
            carry = out
        return state


def bpc_forward(pyramid: EncoderPyramid, module: BPC) -> CalibrationState:
    return module(pyramid)
