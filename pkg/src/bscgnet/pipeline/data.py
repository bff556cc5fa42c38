"""Image/mask pairs on disk."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import List

import numpy as np
from PIL import Image

IMAGE_SUFFIX = ".png"


class DataError(RuntimeError):
    """Problems with input files; the message lists every offending file."""


@dataclass
class Sample:
    image: np.ndarray  # (h, w, 3) float32 in [0, 1]
    mask: np.ndarray   # (h, w) float32 in {0, 1}
    name: str


def list_pngs(directory) -> List[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"not a directory: {directory}")
    return sorted(p for p in directory.iterdir() if p.suffix.lower() == IMAGE_SUFFIX)


def read_gray(path) -> np.ndarray:
    """8-bit grayscale file as floats in [0, 1]."""
    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.float32) / 255.0


def binarize(gray: np.ndarray) -> np.ndarray:
    return (gray > 0.5).astype(np.float32)


def write_gray(path, values: np.ndarray) -> None:
    """Write a [0, 1] map as an 8-bit PNG, ``round(255 * v)``."""
    arr = np.clip(np.round(np.asarray(values, dtype=np.float64) * 255), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(path)


def write_rgb(path, image: np.ndarray) -> None:
    arr = np.clip(np.round(np.asarray(image, dtype=np.float64) * 255), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path)


def load_image(path, size: int = None) -> np.ndarray:
    with Image.open(path) as im:
        im = im.convert("RGB")
        if size is not None and im.size != (size, size):
            im = im.resize((size, size), Image.BILINEAR)
        return np.asarray(im, dtype=np.float32) / 255.0


def load_dataset(image_dir, mask_dir, size: int) -> List[Sample]:
    """Pairs sorted by filename; images resized bilinearly, masks by nearest neighbour."""
    images = list_pngs(image_dir)
    if not images:
        raise DataError(f"no samples: {image_dir} contains no {IMAGE_SUFFIX} images")
    mask_dir = Path(mask_dir)
    samples, problems = [], []
    for path in images:
        mask_path = mask_dir / path.name
        if not mask_path.exists():
            problems.append(f"{path.name}: missing mask {mask_path}")
            continue
        try:
            with Image.open(path) as im, Image.open(mask_path) as mk:
                if im.size != mk.size:
                    problems.append(f"{path.name}: image size {im.size} != mask size {mk.size}")
                    continue
                image = im.convert("RGB").resize((size, size), Image.BILINEAR)
                mask = mk.convert("L").resize((size, size), Image.NEAREST)
                samples.append(Sample(np.asarray(image, dtype=np.float32) / 255.0,
                                      binarize(np.asarray(mask, dtype=np.float32) / 255.0),
                                      path.stem))
        except OSError as exc:
            problems.append(f"{path.name}: unreadable ({exc})")
    if problems:
        raise DataError("dataset errors:\n  " + "\n  ".join(problems))
    return samples


def to_batch(samples: List[Sample]) -> tuple:
    """Stack samples into ``(n, 3, h, w)`` images and ``(n, 1, h, w)`` masks."""
    images = np.stack([s.image.transpose(2, 0, 1) for s in samples]).astype(np.float32)
    masks = np.stack([s.mask[None] for s in samples]).astype(np.float32)
    return images, masks
