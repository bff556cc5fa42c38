"""Batch inference to 8-bit saliency PNGs."""
from __future__ import annotations

from pathlib import Path
from typing import List

import numpy as np
from PIL import Image

from ..core import ops
from ..core.tensor import Tensor
from ..network import BSCGNet, from_checkpoint
from .data import DataError, list_pngs, load_image, write_gray


def predict_file(model: BSCGNet, path) -> np.ndarray:
    """Probability map at the file's own resolution."""
    size = model.config.input_size
    with Image.open(path) as im:
        width, height = im.size
    image = load_image(path, size).transpose(2, 0, 1)[None]
    prob = model.predict(image)
    if (height, width) != (size, size):
        prob = ops.bilinear_resize(Tensor(prob), height, width).data
    return prob[0, 0]


def infer(checkpoint, image_dir, out_dir) -> List[Path]:
    model = checkpoint if isinstance(checkpoint, BSCGNet) else from_checkpoint(checkpoint)
    images = list_pngs(image_dir)
    if not images:
        raise DataError(f"no samples: {image_dir} contains no .png images")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for path in images:
        target = out / f"{path.stem}.png"
        write_gray(target, predict_file(model, path))
        written.append(target)
    return written
