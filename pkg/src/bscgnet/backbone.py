"""VGG16-style five-stage encoder."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .core import ops
from .core.tensor import ShapeError, Tensor
from .nn import ConvReLU, Module

PRESETS = {
    "paper": (64, 128, 256, 512, 512),
    "tiny": (8, 16, 32, 64, 64),
}
VGG16_CONVS = (2, 2, 3, 3, 3)


@dataclass(frozen=True)
class BackboneConfig:
    widths: tuple = PRESETS["tiny"]
    convs_per_stage: tuple = VGG16_CONVS

    def __post_init__(self):
        if len(self.widths) != 5 or len(self.convs_per_stage) != 5:
            raise ValueError("backbone needs exactly five stages")
        if any(w <= 0 for w in self.widths) or any(k <= 0 for k in self.convs_per_stage):
            raise ValueError(f"backbone widths must be positive, got {self.widths}")

    @classmethod
    def preset(cls, name: str) -> "BackboneConfig":
        try:
            return cls(widths=PRESETS[name])
        except KeyError:
            raise ValueError(f"unknown backbone preset {name!r}; choose from {sorted(PRESETS)}")


class EncoderPyramid(NamedTuple):
    """Encoder features at scales 1, 1/2, 1/4, 1/8, 1/16."""

    e1: Tensor
    e2: Tensor
    e3: Tensor
    e4: Tensor
    e5: Tensor


def check_input_size(h: int, w: int) -> None:
    if h < 16 or w < 16 or h % 16 or w % 16:
        raise ShapeError(f"input spatial size must be a multiple of 16 and at least 16, got {h}x{w}")


class Backbone(Module):
    def __init__(self, config: BackboneConfig, rng: np.random.Generator):
        self.config = config
        self.stages = []
        in_ch = 3
        for width, n_convs in zip(config.widths, config.convs_per_stage):
            stage = []
            for _ in range(n_convs):
                stage.append(ConvReLU(in_ch, width, 3, rng))
                in_ch = width
            self.stages.append(_Stage(stage))

    def forward(self, image: Tensor) -> EncoderPyramid:
        if image.data.ndim != 4 or image.shape[1] != 3:
            raise ShapeError(f"backbone: expected an (n, 3, h, w) image, got {image.shape}")
        check_input_size(image.shape[2], image.shape[3])
        feats = []
        x = image
        for k, stage in enumerate(self.stages):
            if k > 0:
                x = ops.maxpool2(x)
            x = stage(x)
            feats.append(x)
        return EncoderPyramid(*feats)


class _Stage(Module):
    def __init__(self, convs: Sequence[ConvReLU]):
        self.convs = list(convs)

    def forward(self, x: Tensor) -> Tensor:
        for conv in self.convs:
            x = conv(x)
        return x


def encode(image: Tensor, backbone: Backbone) -> EncoderPyramid:
    return backbone(image)


def load_weights(backbone: Backbone, path) -> None:
    """Overwrite backbone parameters from a checkpoint holding exactly its tensors."""
    from .checkpoint import load_into

    load_into(backbone, path)
