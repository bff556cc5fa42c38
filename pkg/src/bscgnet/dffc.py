"""Dual-feature feedback into the encoder, and the decoder."""
from __future__ import annotations

from typing import NamedTuple, Optional, Sequence

import numpy as np

from .core import ops
from .core.tensor import ShapeError, Tensor
from .nn import Conv2d, ConvReLU, ConvTranspose2d, Module, SELayer


class DualAttention(NamedTuple):
    p: Tensor        # boundary map concatenated with upsampled semantics, 2*C channels
    p_prime: Tensor  # single-channel gate in (0, 1)


class DecoderPyramid(NamedTuple):
    """Decoder features at 1/8, 1/4, 1/2 and full scale; ``d1`` is the last layer."""

    d8: Tensor
    d4: Tensor
    d2: Tensor
    d1: Tensor


def dual_attention(i3: Tensor, e5: Tensor, reduce: Conv2d, att: Conv2d) -> DualAttention:
    semantic = ops.resize_to(reduce(e5), i3.shape)
    p = ops.concat_channels([i3, semantic])
    return DualAttention(p, ops.sigmoid(att(p)))


def modulation_gain(p_prime: Tensor, ref_shape) -> Tensor:
    """``resize(P') + 1``, single-channel, in (1, 2) wherever P' is in (0, 1)."""
    if p_prime.shape[1] != 1:
        raise ShapeError(f"modulate: gate must be single-channel, got {p_prime.shape}")
    return ops.add_scalar(ops.resize_to(p_prime, ref_shape), 1.0)


def modulate(p_prime: Tensor, e: Tensor, se: SELayer) -> Tensor:
    """``SE((resize(P') + 1) * E)``; the gate broadcasts over E's channels."""
    return se(ops.mul(modulation_gain(p_prime, e.shape), e))


class DFFC(Module):
    def __init__(self, widths: Sequence[int], channels: int, rng: np.random.Generator):
        self.reduce = Conv2d(widths[4], channels, 1, rng)
        self.att = Conv2d(2 * channels, 1, 1, rng)
        self.se = [SELayer(w, rng) for w in widths]

    def forward(self, i3: Tensor, pyramid) -> tuple:
        attention = dual_attention(i3, pyramid[4], self.reduce, self.att)
        modulated = [modulate(attention.p_prime, e, se) for e, se in zip(pyramid, self.se)]
        return attention, modulated


class Decoder(Module):
    """Transposed-conv upsampling with neighbouring-layer fusion, 1/16 -> 1."""

    def __init__(self, widths: Sequence[int], channels: int, rng: np.random.Generator):
        self.channels = channels
        self.proj = [Conv2d(w, channels, 1, rng) for w in widths]
        self.head = ConvReLU(channels, channels, 3, rng)
        self.up = [ConvTranspose2d(channels, channels, 2, 2, rng) for _ in range(4)]
        self.fuse = [ConvReLU(2 * channels, channels, 3, rng) for _ in range(4)]

    def forward(self, feats: Sequence[Tensor], skip1_extra: Optional[Tensor] = None) -> DecoderPyramid:
        if len(feats) != 5:
            raise ShapeError(f"decode: expected five modulated features, got {len(feats)}")
        g = [conv(f) for conv, f in zip(self.proj, feats)]
        if skip1_extra is not None:
            g[0] = ops.add(g[0], skip1_extra)
        x = self.head(g[4])
        outs = []
        for stage, k in enumerate((3, 2, 1, 0)):
            up = self.up[stage](x)
            if up.shape[2:] != g[k].shape[2:]:
                raise ShapeError(f"decode: upsampled {up.shape} does not meet skip {g[k].shape}")
            x = self.fuse[stage](ops.concat_channels([up, g[k]]))
            outs.append(x)
        return DecoderPyramid(*outs)


def decode(feats: Sequence[Tensor], decoder: Decoder) -> DecoderPyramid:
    return decoder(feats)
