"""Deterministic random-stream derivation.

All randomness in the toolkit flows from a single integer master seed.
Subsystems get independent substreams by hashing a label path, so adding
a new consumer never perturbs the draws seen by existing ones.
"""

from __future__ import annotations

import hashlib

import numpy as np

_SEP = b"\x1f"


def derive_entropy(*labels) -> int:
    """256-bit integer keyed by the label path (ints and strings)."""
    h = hashlib.sha256()
    for lab in labels:
        if isinstance(lab, (int, np.integer)):
            h.update(b"i" + str(int(lab)).encode())
        elif isinstance(lab, str):
            h.update(b"s" + lab.encode())
        else:
            raise TypeError(f"labels must be int or str, got {type(lab).__name__}")
        h.update(_SEP)
    return int.from_bytes(h.digest(), "big")


def substream(*labels) -> np.random.Generator:
    """Generator for the given label path, e.g. substream(seed, "channel", trial)."""
    return np.random.default_rng(np.random.SeedSequence(derive_entropy(*labels)))


def derive_seed(*labels) -> int:
    """Small (63-bit) derived seed for APIs that want a plain integer."""
    return derive_entropy(*labels) & (2**63 - 1)
