"""Training loop: Adam, step-decayed learning rate, deep-supervised hybrid loss."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import List, Optional

import numpy as np

from ..core import adam_step
from ..core.tensor import Tensor
from ..network import BSCGNet, ModelConfig
from ..objective.losses import joint_loss
from .augment import AugmentConfig, augment
from .data import DataError, Sample, load_dataset, to_batch

log = logging.getLogger(__name__)


class NumericalError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    lr: float = 1e-4
    batch_size: int = 8
    epochs: int = 50
    lr_decay: float = 0.1
    decay_every: int = 30  # epochs; 0 disables decay
    input_size: int = 256
    seed: int = 0
    max_steps: Optional[int] = None
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    image_dir: Optional[str] = None
    mask_dir: Optional[str] = None
    out_dir: str = "runs/train"

    def __post_init__(self):
        if isinstance(self.model, dict):
            self.model = ModelConfig.from_dict(self.model)
        if isinstance(self.augment, dict):
            self.augment = AugmentConfig(**self.augment)
        if self.batch_size <= 0 or self.epochs <= 0 or self.input_size <= 0:
            raise ValueError("batch_size, epochs and input_size must be positive")
        if self.model.input_size != self.input_size:
            self.model = replace(self.model, input_size=self.input_size)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["model"] = self.model.to_dict()
        d["augment"] = asdict(self.augment)
        return d

    @classmethod
    def from_json(cls, path) -> "TrainConfig":
        """Load a JSON config; relative paths are taken relative to the file."""
        path = Path(path)
        raw = json.loads(path.read_text())
        for key in ("image_dir", "mask_dir", "out_dir"):
            if raw.get(key) is not None and not Path(raw[key]).is_absolute():
                raw[key] = str((path.parent / raw[key]).resolve())
        return cls(**raw)


def lr_at(config: TrainConfig, epoch: int) -> float:
    """Learning rate for 1-based ``epoch``."""
    if not config.decay_every:
        return config.lr
    return config.lr * config.lr_decay ** ((epoch - 1) // config.decay_every)


@dataclass
class TrainResult:
    model: BSCGNet
    history: List[dict]
    final_checkpoint: Optional[Path] = None
    best_checkpoint: Optional[Path] = None
    steps: int = 0


def train(config: TrainConfig, samples: Optional[List[Sample]] = None,
          out_dir: Optional[str] = None, write: bool = True) -> TrainResult:
    """Train from scratch; the run is a pure function of ``config`` (seeded)."""
    if samples is None:
        if not config.image_dir or not config.mask_dir:
            raise DataError("train: image_dir and mask_dir must be set")
        samples = load_dataset(config.image_dir, config.mask_dir, config.input_size)
    if not samples:
        raise DataError("train: dataset is empty")
    out = Path(out_dir or config.out_dir)
    if write:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.json").write_text(json.dumps(config.to_dict(), indent=2))

    rng = np.random.default_rng(config.seed)
    model = BSCGNet(config.model)
    params = model.parameters()
    n_expected = config.model.n_outputs
    history, step, best = [], 0, np.inf
    result = TrainResult(model, history)

    for epoch in range(1, config.epochs + 1):
        lr = lr_at(config, epoch)
        order = rng.permutation(len(samples))
        sums = {"loss": 0.0, "bce": 0.0, "iou": 0.0, "mae": 0.0}
        n_batches = 0
        for b, start in enumerate(range(0, len(order), config.batch_size)):
            batch = [augment(samples[i], rng, config.augment) for i in order[start:start + config.batch_size]]
            images, masks = to_batch(batch)
            fwd = model(Tensor(images))
            terms = joint_loss(fwd.outputs, masks, use_iou=config.model.use_iou_loss,
                               expected=n_expected)
            loss = float(terms.joint.data)
            if not np.isfinite(loss):
                bad = [f"{name}: {rec}" for name, rec in zip(fwd.outputs.names, terms.per_output)
                       if not all(np.isfinite(v) for v in rec.values())]
                raise NumericalError(f"non-finite loss at epoch {epoch}, batch {b}: "
                                     + "; ".join(bad or [f"joint={loss}"]))
            terms.joint.backward()
            adam_step(params, lr)
            model.zero_grad()
            step += 1
            n_batches += 1
            sums["loss"] += loss
            sums["bce"] += terms.bce
            sums["iou"] += terms.iou
            sums["mae"] += float(np.abs(fwd.prob.data - masks).mean())
            if config.max_steps is not None and step >= config.max_steps:
                break
        row = {"epoch": epoch, "step": step, "lr": lr}
        row.update({k: v / n_batches for k, v in sums.items()})
        history.append(row)
        log.info("epoch %d step %d lr %.2e loss %.4f mae %.4f", epoch, step, lr, row["loss"], row["mae"])
        if write and row["loss"] < best:
            best = row["loss"]
            result.best_checkpoint = out / "best.ckpt"
            model.save(result.best_checkpoint)
        if config.max_steps is not None and step >= config.max_steps:
            break

    result.steps = step
    if write:
        result.final_checkpoint = out / "final.ckpt"
        model.save(result.final_checkpoint)
        with open(out / "train_log.csv", "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(history[0]))
            writer.writeheader()
            writer.writerows(history)
    return result
