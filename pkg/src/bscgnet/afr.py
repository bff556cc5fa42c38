"""Adaptive feedback refinement and the deep-supervision heads.

Decoder naming is by scale: ``d8, d4, d2`` sit at 1/8, 1/4, 1/2 and ``d1``
is the last (full-resolution) decoder layer that gets fed back.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, NamedTuple

import numpy as np

from .core import ops
from .core.tensor import ShapeError, Tensor
from .dffc import DecoderPyramid
from .nn import Conv2d, ConvReLU, Module

OUTPUT_NAMES = ("d8", "d4", "d2", "d1", "refined", "fused")


class FeedbackSet(NamedTuple):
    fb8: Tensor
    fb4: Tensor
    fb2: Tensor
    f8: Tensor
    f4: Tensor
    f2: Tensor


@dataclass
class CrossState:
    a_coarse: Tensor
    a_fine: Tensor
    c1: Tensor
    c2: Tensor
    s: Tensor


@dataclass
class SupervisedOutputs:
    """Single-channel logit maps, all at input resolution; the last one is final."""

    maps: List[Tensor]
    names: tuple
    trace: dict = field(default_factory=dict)

    @property
    def final(self) -> Tensor:
        return self.maps[-1]

    def __len__(self) -> int:
        return len(self.maps)


def feedback(dp: DecoderPyramid, convs) -> FeedbackSet:
    fbs = [ops.resize_to(dp.d1, d.shape) for d in (dp.d8, dp.d4, dp.d2)]
    fs = [ops.add(fb, conv(d)) for fb, conv, d in zip(fbs, convs, (dp.d8, dp.d4, dp.d2))]
    return FeedbackSet(*fbs, *fs)


class IIRCross(Module):
    """Cross-gated refinement of two neighbouring scales."""

    def __init__(self, channels: int, rng: np.random.Generator):
        self.att_coarse = [Conv2d(channels, channels, 3, rng), Conv2d(channels, 1, 3, rng)]
        self.att_fine = [Conv2d(channels, channels, 3, rng), Conv2d(channels, 1, 3, rng)]
        self.pre_fine = Conv2d(channels, channels, 3, rng)
        self.pre_coarse = Conv2d(channels, channels, 3, rng)
        self.post1 = Conv2d(channels, channels, 3, rng)
        self.post2 = Conv2d(channels, channels, 3, rng)
        self.merge = Conv2d(2 * channels, channels, 1, rng)

    @staticmethod
    def _attention(x: Tensor, convs) -> Tensor:
        return ops.sigmoid(convs[1](convs[0](x)))

    def forward(self, x_coarse: Tensor, x_fine: Tensor) -> CrossState:
        hc, wc = x_coarse.shape[2:]
        hf, wf = x_fine.shape[2:]
        if (2 * hc, 2 * wc) != (hf, wf):
            raise ShapeError(f"iir_cross: coarse input {x_coarse.shape} must be one octave below "
                             f"fine input {x_fine.shape}")
        x_coarse = ops.resize_to(x_coarse, x_fine.shape)
        a_coarse = self._attention(x_coarse, self.att_coarse)
        a_fine = self._attention(x_fine, self.att_fine)
        c1 = self.post1(ops.mul(ops.add_scalar(a_coarse, 1.0), self.pre_fine(x_fine)))
        c2 = self.post2(ops.mul(ops.add_scalar(a_fine, 1.0), self.pre_coarse(x_coarse)))
        s = self.merge(ops.concat_channels([c1, c2]))
        return CrossState(a_coarse, a_fine, c1, c2, s)


def iir_cross(x_coarse: Tensor, x_fine: Tensor, module: IIRCross) -> CrossState:
    return module(x_coarse, x_fine)


class DenseDilated(Module):
    """Chain of dilated 3x3 ConvReLUs (rates 1..4), each re-adding the chain input."""

    RATES = (1, 2, 3, 4)

    def __init__(self, channels: int, rng: np.random.Generator):
        self.convs = [ConvReLU(channels, channels, 3, rng, dilation=r) for r in self.RATES]

    def forward(self, x: Tensor) -> Tensor:
        prev = x
        for conv in self.convs:
            prev = ops.add(conv(prev), x)
        return prev


def dense_dilated(x: Tensor, module: DenseDilated) -> Tensor:
    return module(x)


class DecoderHeads(Module):
    """1x1 logit heads on d8, d4, d2, d1."""

    def __init__(self, channels: int, rng: np.random.Generator):
        self.convs = [Conv2d(channels, 1, 1, rng) for _ in range(4)]

    def forward(self, dp: DecoderPyramid) -> List[Tensor]:
        full = dp.d1.shape
        return [ops.resize_to(conv(d), full) for conv, d in zip(self.convs, dp)]


class AFR(Module):
    def __init__(self, channels: int, rng: np.random.Generator):
        self.channels = channels
        self.fb_convs = [Conv2d(channels, channels, 1, rng) for _ in range(3)]
        self.cross1 = IIRCross(channels, rng)
        self.cross2 = IIRCross(channels, rng)
        self.dilated = DenseDilated(channels, rng)
        self.decoder_heads = DecoderHeads(channels, rng)
        self.refined_head = Conv2d(channels, 1, 1, rng)
        self.fuse = Conv2d(3 * channels, 1, 1, rng)

    def forward(self, dp: DecoderPyramid, i3: Tensor) -> SupervisedOutputs:
        full = dp.d1.shape
        fs = feedback(dp, self.fb_convs)
        cross1 = self.cross1(fs.f8, fs.f4)
        cross2 = self.cross2(cross1.s, fs.f2)
        refined = self.dilated(cross2.s)
        fused = self.fuse(ops.concat_channels([dp.d1, i3, ops.resize_to(refined, full)]))
        maps = self.decoder_heads(dp)
        maps.append(ops.resize_to(self.refined_head(refined), full))
        maps.append(fused)
        trace = {"feedback": fs, "cross1": cross1, "cross2": cross2, "refined": refined}
        return SupervisedOutputs(maps, OUTPUT_NAMES, trace)


def afr_forward(dp: DecoderPyramid, i3: Tensor, module: AFR) -> SupervisedOutputs:
    return module(dp, i3)
