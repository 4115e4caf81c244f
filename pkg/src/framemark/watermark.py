"""Blind spread-spectrum payload embedding for single frames.

The payload modulates pseudo-random +/-1 patterns on mid-band
coefficients of the 8x8 block cosine transform of the luma plane. Each
payload bit owns a seeded group of blocks; extraction correlates the
received coefficients with the same patterns and takes the sign, so no
original frame is needed. The luma delta is added identically to all
three channels, which preserves it exactly under the luma weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.fft import dctn, idctn

from .bits import BitString, as_bit_array

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])

# Mid-band coefficient coordinates within an 8x8 transform block: high
# enough to survive quantization-style attacks poorly correlated with
# content, low enough to survive smoothing.
MIDBAND = ((0, 2), (1, 1), (2, 0), (0, 3), (1, 2), (2, 1),
           (3, 0), (1, 3), (2, 2), (3, 1), (2, 3), (3, 2))

MIN_FRAME_SIDE = 64


@dataclass(frozen=True)
class EmbedParams:
    """Embedding configuration; the pattern seed is the secret."""

    payload_bits: int = 48
    block_size: int = 8
    alpha: float = 3.0
    pattern_seed: int = 0

    def __post_init__(self):
        if self.payload_bits < 1:
            raise ValueError("payload_bits must be >= 1")
        if self.block_size < 4:
            raise ValueError("block_size must be >= 4")
        if max(u for u, v in MIDBAND) >= self.block_size:
            raise ValueError("block_size too small for the mid-band layout")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")

    def to_dict(self) -> dict:
        return {
            "payload_bits": self.payload_bits,
            "block_size": self.block_size,
            "alpha": self.alpha,
            "pattern_seed": self.pattern_seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EmbedParams":
        return cls(payload_bits=int(d["payload_bits"]),
                   block_size=int(d["block_size"]),
                   alpha=float(d["alpha"]),
                   pattern_seed=int(d["pattern_seed"]))


def check_frame(frame) -> np.ndarray:
    arr = np.asarray(frame)
    if arr.dtype != np.uint8 or arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError("frame must be a (H, W, 3) uint8 array")
    h, w = arr.shape[:2]
    if h < MIN_FRAME_SIDE or w < MIN_FRAME_SIDE:
        raise ValueError(f"frame {h}x{w} too small; minimum side is {MIN_FRAME_SIDE}")
    return arr


def _grid(params: EmbedParams, h: int, w: int):
    bs = params.block_size
    hb, wb = h // bs, w // bs
    nb = hb * wb
    if nb < params.payload_bits:
        min_side = int(np.ceil(np.sqrt(params.payload_bits))) * bs
        raise ValueError(
            f"frame too small for {params.payload_bits} payload bits: "
            f"{nb} blocks available, need >= {params.payload_bits} "
            f"(e.g. at least {min_side}x{min_side} pixels)")
    return hb, wb, nb


def _layout(params: EmbedParams, nb: int):
    """Seeded block-to-bit assignment and per-block patterns.

    The draw order (permutation, then patterns) is part of the embedded
    format; changing it would orphan existing marks. The layout depends
    on the block count, so extraction must run at the embedding
    geometry.
    """
    rng = np.random.default_rng(int(params.pattern_seed))
    perm = rng.permutation(nb)
    group_id = np.empty(nb, dtype=np.int64)
    group_id[perm] = np.arange(nb) % params.payload_bits
    pn = rng.integers(0, 2, size=(nb, len(MIDBAND))).astype(np.float64) * 2.0 - 1.0
    return group_id, pn


def _block_dct(plane: np.ndarray, bs: int, hb: int, wb: int) -> np.ndarray:
    blocks = plane[:hb * bs, :wb * bs].reshape(hb, bs, wb, bs).transpose(0, 2, 1, 3)
    return dctn(blocks, axes=(-2, -1), norm="ortho").reshape(hb * wb, bs, bs)


def modulation_field(params: EmbedParams, nb: int, payload) -> np.ndarray:
    """Per-block mid-band deltas (nb, len(MIDBAND)) for a payload."""
    bits = as_bit_array(payload)
    if bits.size != params.payload_bits:
        raise ValueError(f"payload must have {params.payload_bits} bits, got {bits.size}")
    group_id, pn = _layout(params, nb)
    signs = bits[group_id].astype(np.float64) * 2.0 - 1.0
    return params.alpha * signs[:, None] * pn


def embed_frame(frame, payload, params: EmbedParams = EmbedParams()) -> np.ndarray:
    """Embed a payload; returns a new uint8 frame."""
    arr = check_frame(frame)
    h, w = arr.shape[:2]
    bs = params.block_size
    hb, wb, nb = _grid(params, h, w)
    if params.alpha == 0.0:
        return arr.copy()
    delta_m = modulation_field(params, nb, payload)
    us = np.array([u for u, v in MIDBAND])
    vs = np.array([v for u, v in MIDBAND])
    delta_blocks = np.zeros((nb, bs, bs))
    delta_blocks[:, us, vs] = delta_m
    delta = idctn(delta_blocks, axes=(-2, -1), norm="ortho")
    delta = delta.reshape(hb, wb, bs, bs).transpose(0, 2, 1, 3).reshape(hb * bs, wb * bs)
    out = arr.astype(np.float64)
    out[:hb * bs, :wb * bs, :] += delta[:, :, None]
    return np.clip(np.round(out), 0, 255).astype(np.uint8)


def correlation_scores(frame, params: EmbedParams = EmbedParams()) -> np.ndarray:
    """Per-bit correlation sums; the sign carries the payload bit."""
    arr = check_frame(frame)
    h, w = arr.shape[:2]
    bs = params.block_size
    hb, wb, nb = _grid(params, h, w)
    group_id, pn = _layout(params, nb)
    lum = arr.astype(np.float64) @ LUMA_WEIGHTS
    D = _block_dct(lum, bs, hb, wb)
    us = np.array([u for u, v in MIDBAND])
    vs = np.array([v for u, v in MIDBAND])
    block_corr = (D[:, us, vs] * pn).sum(axis=1)
    return np.bincount(group_id, weights=block_corr, minlength=params.payload_bits)


def extract_frame(frame, params: EmbedParams = EmbedParams()) -> BitString:
    """Blind payload read-back: sign of each bit group's correlation."""
    scores = correlation_scores(frame, params)
    return BitString((scores > 0).astype(np.uint8))


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio between two uint8 images, in dB."""
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    mse = np.mean((x - y) ** 2)
    if mse == 0:
        return float("inf")
    return float(10.0 * np.log10(255.0 ** 2 / mse))
