"""Full network assembly, ablation switches, parameter and FLOP accounting."""
from __future__ import annotations

from dataclasses import asdict, dataclass, replace
from typing import NamedTuple, Optional

import numpy as np

from . import checkpoint
from .afr import AFR, DecoderHeads, SupervisedOutputs
from .backbone import Backbone, BackboneConfig, EncoderPyramid, PRESETS, check_input_size
from .bpc import BPC, CalibrationState
from .core import ops
from .core.tensor import ShapeError, Tensor, get_default_dtype, no_grad
from .dffc import DFFC, DecoderPyramid, Decoder
from .nn import Module

# reported figures for the full model at 256x256 input
PAPER_PARAMS_M = 26.99
PAPER_FLOPS_G = 86.35
PAPER_BPC_PARAMS_M = 0.32

# ablation rows: (use_bpc, use_dffc, use_afr, use_iou_loss)
ABLATION_ROWS = {
    1: (False, False, False, True),
    2: (True, False, False, True),
    3: (False, True, False, True),
    4: (False, False, True, True),
    5: (True, True, True, False),
    6: (True, True, True, True),
}


@dataclass(frozen=True)
class ModelConfig:
    preset: str = "tiny"
    channels: Optional[int] = None  # common calibration/decoder width; defaults to widths[0]
    use_bpc: bool = True
    use_dffc: bool = True
    use_afr: bool = True
    use_iou_loss: bool = True
    input_size: int = 64
    init_seed: int = 0

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ValueError(f"unknown preset {self.preset!r}; choose from {sorted(PRESETS)}")
        if self.input_size < 16 or self.input_size % 16:
            raise ValueError(f"input_size must be a positive multiple of 16, got {self.input_size}")
        if self.channels is not None and self.channels <= 0:
            raise ValueError("channels must be positive")

    @property
    def widths(self) -> tuple:
        return PRESETS[self.preset]

    @property
    def width(self) -> int:
        return self.channels or self.widths[0]

    @property
    def n_outputs(self) -> int:
        return 6 if self.use_afr else 4

    def architecture(self) -> dict:
        """Fields that determine parameter names and shapes."""
        return {"preset": self.preset, "channels": self.width, "use_bpc": self.use_bpc,
                "use_dffc": self.use_dffc, "use_afr": self.use_afr}

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)

    @classmethod
    def ablation(cls, row: int, **kwargs) -> "ModelConfig":
        bpc, dffc, afr, iou = ABLATION_ROWS[row]
        return cls(use_bpc=bpc, use_dffc=dffc, use_afr=afr, use_iou_loss=iou, **kwargs)


class ForwardResult(NamedTuple):
    outputs: SupervisedOutputs
    prob: Tensor
    pyramid: EncoderPyramid
    calibration: Optional[CalibrationState]
    decoder: DecoderPyramid


class BSCGNet(Module):
    def __init__(self, config: ModelConfig = ModelConfig(), rng: Optional[np.random.Generator] = None):
        self.config = config
        rng = rng if rng is not None else np.random.default_rng(config.init_seed)
        widths, c = config.widths, config.width
        self.backbone = Backbone(BackboneConfig(widths=widths), rng)
        self.bpc = BPC(widths, c, rng) if config.use_bpc else None
        self.dffc = DFFC(widths, c, rng) if config.use_dffc else None
        self.decoder = Decoder(widths, c, rng)
        if config.use_afr:
            self.afr = AFR(c, rng)
            self.heads = None
        else:
            self.afr = None
            self.heads = DecoderHeads(c, rng)

    def forward(self, image: Tensor) -> ForwardResult:
        try:
            pyramid = self.backbone(image)
        except ShapeError as exc:
            raise ShapeError(f"backbone: {exc}") from exc
        n, _, h, w = image.shape
        c = self.config.width
        calibration = None
        if self.bpc is not None:
            calibration = self.bpc(pyramid)
            i3 = calibration.i3
        else:
            i3 = Tensor(np.zeros((n, c, h, w), dtype=image.dtype))

        skip_extra = None
        if self.dffc is not None:
            _, feats = self.dffc(i3, pyramid)
        else:
            feats = list(pyramid)
            if self.bpc is not None:
                skip_extra = i3
        dp = self.decoder(feats, skip_extra)

        if self.afr is not None:
            outputs = self.afr(dp, i3)
        else:
            outputs = SupervisedOutputs(self.heads(dp), ("d8", "d4", "d2", "d1"))
        return ForwardResult(outputs, ops.sigmoid(outputs.final), pyramid, calibration, dp)

    def predict(self, image: np.ndarray) -> np.ndarray:
        """Probability maps ``(n, 1, h, w)`` for an ``(n, 3, h, w)`` image batch."""
        dtype = self.parameters()[0].data.dtype
        with no_grad():
            return self.forward(Tensor(np.asarray(image, dtype=dtype))).prob.data

    def save(self, path) -> None:
        checkpoint.save(self, path, self.config.architecture(), {"model": self.config.to_dict()})

    def load(self, path) -> dict:
        return checkpoint.load_into(self, path, self.config.architecture())


def from_checkpoint(path) -> BSCGNet:
    """Rebuild a model from the configuration stored in a checkpoint and load it."""
    header, _ = checkpoint.read(path)
    meta = header.get("meta") or {}
    if "model" not in meta:
        raise checkpoint.CheckpointError(f"{path}: no model configuration stored")
    model = BSCGNet(ModelConfig.from_dict(meta["model"]))
    model.load(path)
    return model


def count_params(config: ModelConfig) -> int:
    return BSCGNet(config).num_parameters()


def module_params(config: ModelConfig) -> dict:
    model = BSCGNet(config)
    parts = {"backbone": model.backbone, "bpc": model.bpc, "dffc": model.dffc,
             "decoder": model.decoder, "afr": model.afr, "heads": model.heads}
    return {k: (v.num_parameters() if v is not None else 0) for k, v in parts.items()}


def flop_breakdown(config: ModelConfig, size: Optional[int] = None) -> list:
    """Per-op ``(name, output_shape, flops)`` records for one forward pass at batch 1."""
    size = size or config.input_size
    check_input_size(size, size)
    model = BSCGNet(config)
    image = Tensor(np.zeros((1, 3, size, size), dtype=get_default_dtype()))
    with no_grad(), ops.count_flops() as log:
        model(image)
    return list(log)


def estimate_flops(config: ModelConfig, size: Optional[int] = None) -> int:
    """FLOPs of one forward pass; a multiply-add counts as two."""
    return sum(f for _, _, f in flop_breakdown(config, size))


def build(config: ModelConfig) -> BSCGNet:
    return BSCGNet(config)


def toggled(config: ModelConfig, **changes) -> ModelConfig:
    return replace(config, **changes)
