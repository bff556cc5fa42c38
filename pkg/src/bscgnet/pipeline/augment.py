"""Joint geometric augmentation of image/mask pairs plus image-only blur."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.ndimage import gaussian_filter

from .data import Sample

MAX_BLUR_SIGMA = 1.5


@dataclass(frozen=True)
class AugmentConfig:
    rotate: bool = True
    hflip: bool = True
    vflip: bool = True
    blur: bool = True

    @classmethod
    def disabled(cls) -> "AugmentConfig":
        return cls(False, False, False, False)


def rot90(arr: np.ndarray, k: int) -> np.ndarray:
    """Rotate the two leading (spatial) axes counter-clockwise by ``k`` quarter turns."""
    return np.ascontiguousarray(np.rot90(arr, k, axes=(0, 1)))


def hflip(arr: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(arr[:, ::-1])


def vflip(arr: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(arr[::-1])


def augment(sample: Sample, rng: np.random.Generator,
            config: AugmentConfig = AugmentConfig()) -> Sample:
    """Right-angle rotation and flips applied to both maps; blur touches only the image.

    Every random draw is made regardless of the switches so that the RNG stream
    does not depend on which augmentations are enabled.
    """
    k = int(rng.integers(4))
    do_h = rng.random() < 0.5
    do_v = rng.random() < 0.5
    sigma = float(rng.uniform(0.0, MAX_BLUR_SIGMA))
    image, mask = sample.image, sample.mask
    if config.rotate and k:
        image, mask = rot90(image, k), rot90(mask, k)
    if config.hflip and do_h:
        image, mask = hflip(image), hflip(mask)
    if config.vflip and do_v:
        image, mask = vflip(image), vflip(mask)
    if config.blur and sigma > 0:
        image = gaussian_filter(image, sigma=(sigma, sigma, 0), mode="nearest").astype(np.float32)
    return replace(sample, image=image, mask=mask)
