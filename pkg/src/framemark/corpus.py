"""Deterministic synthetic frames for self-contained benchmarking.

Frames mix smooth sinusoidal shading, low-frequency texture, and a few
flat rectangles, at a mid-range mean luma so photometric stretches do
not clip most of the image. Content is fully determined by the seed.
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import zoom

from . import rng as rngmod


def synth_frame(seed: int, size: int = 512) -> np.ndarray:
    """One (size, size, 3) uint8 frame determined by `seed`."""
    if size < 64:
        raise ValueError("size must be >= 64")
    rng = np.random.default_rng(int(seed))
    y, x = np.mgrid[0:size, 0:size].astype(np.float64) / size
    img = np.empty((size, size, 3))
    fx = rng.uniform(1.5, 6.0)
    fy = rng.uniform(1.5, 6.0)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    for c in range(3):
        amp = rng.uniform(25.0, 55.0)
        img[..., c] = 100.0 + amp * np.sin(2.0 * np.pi * (fx * x + fy * y)
                                           + phase + 1.9 * c)
    coarse = rng.normal(0.0, 20.0, size=(max(2, size // 32),) * 2 + (3,))
    img += zoom(coarse, (size / coarse.shape[0], size / coarse.shape[1], 1), order=1)
    for _ in range(6):
        rh = int(rng.integers(size // 10, size // 3))
        rw = int(rng.integers(size // 10, size // 3))
        ry = int(rng.integers(0, size - rh))
        rx_ = int(rng.integers(0, size - rw))
        img[ry:ry + rh, rx_:rx_ + rw] += rng.uniform(-30.0, 30.0, size=3)
    return np.clip(np.round(img), 0, 255).astype(np.uint8)


def corpus_frames(count: int = 8, size: int = 512, seed: int = 0) -> list:
    """A reproducible list of synthetic frames."""
    if count < 1:
        raise ValueError("count must be >= 1")
    return [synth_frame(rngmod.derive_seed("corpus", seed, i), size=size)
            for i in range(count)]
