"""Deterministic synthetic saliency dataset: textured backgrounds with a few shapes."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .data import write_gray, write_rgb

SHAPES = ("ellipse", "rectangle", "bar", "blob")
MIN_RATIO, MAX_RATIO = 0.02, 0.6


@dataclass(frozen=True)
class SyntheticSpec:
    count: int = 8
    size: int = 64
    shapes: tuple = SHAPES
    texture: float = 0.15
    seed: int = 0
    max_objects: int = 2


def _shape_mask(kind: str, size: int, rng: np.random.Generator) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size] + 0.5
    cy, cx = rng.uniform(0.2, 0.8, 2) * size
    if kind == "ellipse":
        ry, rx = rng.uniform(0.08, 0.3, 2) * size
        return ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
    if kind == "rectangle":
        hy, hx = rng.uniform(0.08, 0.28, 2) * size
        return (np.abs(yy - cy) <= hy) & (np.abs(xx - cx) <= hx)
    theta = rng.uniform(0, np.pi)
    u = (xx - cx) * np.cos(theta) + (yy - cy) * np.sin(theta)
    v = -(xx - cx) * np.sin(theta) + (yy - cy) * np.cos(theta)
    if kind == "bar":
        half_len = rng.uniform(0.2, 0.4) * size
        half_wid = rng.uniform(0.04, 0.1) * size
        return (np.abs(u) <= half_len) & (np.abs(v) <= half_wid)
    if kind == "blob":
        # star-shaped polygon: radius interpolated between random spokes
        k = int(rng.integers(5, 10))
        radii = rng.uniform(0.08, 0.25, k) * size
        angle = np.mod(np.arctan2(v, u), 2 * np.pi)
        spokes = np.linspace(0, 2 * np.pi, k + 1)
        edge = np.interp(angle, spokes, np.append(radii, radii[0]))
        return np.hypot(u, v) <= edge
    raise ValueError(f"unknown shape {kind!r}")


def render(spec: SyntheticSpec, rng: np.random.Generator) -> tuple:
    """One ``(image[h, w, 3], mask[h, w])`` pair; the mask is exactly the painted region."""
    size = spec.size
    while True:
        mask = np.zeros((size, size), dtype=bool)
        for _ in range(int(rng.integers(1, spec.max_objects + 1))):
            mask |= _shape_mask(spec.shapes[int(rng.integers(len(spec.shapes)))], size, rng)
        ratio = mask.mean()
        if MIN_RATIO <= ratio <= MAX_RATIO:
            break
    bg_color = rng.uniform(0.15, 0.55, 3)
    fg_color = np.clip(bg_color + rng.choice([-1, 1]) * rng.uniform(0.3, 0.45, 3), 0, 1)
    noise = gaussian_filter(rng.standard_normal((size, size, 3)), sigma=(2, 2, 0))
    noise *= spec.texture / (noise.std() + 1e-12)
    image = np.where(mask[..., None], fg_color, bg_color) + noise
    return np.clip(image, 0, 1), mask


def synth_generate(spec: SyntheticSpec, out_dir) -> Path:
    """Write ``images/NNNN.png`` and ``masks/NNNN.png`` under ``out_dir``."""
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "masks").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)
    for i in range(spec.count):
        image, mask = render(spec, rng)
        write_rgb(out / "images" / f"{i:04d}.png", image)
        write_gray(out / "masks" / f"{i:04d}.png", mask.astype(np.float64))
    return out
