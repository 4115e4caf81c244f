"""Template-key generation and the frame-index side channel.

A template set is a small dictionary of d-bit keys with a guaranteed
pairwise Hamming distance. Assigning template i to frame j lets a
verifier recover the frame ordering later by nearest-template matching;
the assignment itself can carry log2(M) bits per frame when M is a
power of two.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bits import BitString, similarity_matrix

DEFAULT_TEMPLATE_COUNT = 16
DEFAULT_KEY_BITS = 48

_DRAW_BUDGET_PER_KEY = 500


def _pairwise_min_distance(keys: np.ndarray) -> int:
    if keys.shape[0] < 2:
        return keys.shape[1]
    x = keys.astype(np.int64)
    d = keys.shape[1]
    dots = x @ x.T
    ones = x.sum(axis=1)
    dist = ones[:, None] + ones[None, :] - 2 * dots
    iu = np.triu_indices(keys.shape[0], k=1)
    return int(dist[iu].min())


class TemplateSet:
    """An ordered set of distinct d-bit keys with a pairwise distance floor."""

    def __init__(self, keys: np.ndarray, seed: int, min_distance: int,
                 data_words: np.ndarray | None = None):
        keys = np.asarray(keys, dtype=np.uint8)
        if keys.ndim != 2 or keys.shape[0] < 1 or keys.shape[1] < 1:
            raise ValueError(f"keys must be a non-empty (M, d) array, got {keys.shape}")
        if keys.max(initial=0) > 1:
            raise ValueError("keys must be 0/1 valued")
        if min_distance < 0 or min_distance > keys.shape[1]:
            raise ValueError(f"min_distance must be in [0, {keys.shape[1]}]")
        got = _pairwise_min_distance(keys)
        if got < min_distance:
            raise ValueError(
                f"pairwise distance {got} violates required minimum {min_distance}")
        keys = keys.copy()
        keys.setflags(write=False)
        self._keys = keys
        self.seed = int(seed)
        self.min_distance = int(min_distance)
        if data_words is not None:
            data_words = np.asarray(data_words, dtype=np.uint8).copy()
            if data_words.shape[0] != keys.shape[0]:
                raise ValueError("data_words count must match key count")
            data_words.setflags(write=False)
        self.data_words = data_words

    @property
    def keys(self) -> np.ndarray:
        """Read-only (M, d) array of key bits."""
        return self._keys

    @property
    def count(self) -> int:
        return int(self._keys.shape[0])

    @property
    def key_bits(self) -> int:
        return int(self._keys.shape[1])

    def __len__(self) -> int:
        return self.count

    def key(self, i: int) -> BitString:
        return BitString(self._keys[i])

    def __repr__(self) -> str:
        return (f"TemplateSet(M={self.count}, d={self.key_bits}, "
                f"min_distance={self.min_distance}, seed={self.seed})")

    def to_dict(self) -> dict:
        d = {
            "M": self.count,
            "d": self.key_bits,
            "min_distance": self.min_distance,
            "seed": self.seed,
            "keys": [BitString(k).to_hex() for k in self._keys],
        }
        if self.data_words is not None:
            d["data_words"] = [BitString(w).to_hex() for w in self.data_words]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TemplateSet":
        keys = np.stack([BitString.from_hex(h, d["d"]).bits for h in d["keys"]])
        words = None
        if d.get("data_words"):
            words = np.stack([BitString.from_hex(h, 4 * len(h)).bits
                              for h in d["data_words"]])
        return cls(keys, seed=d["seed"], min_distance=d["min_distance"],
                   data_words=words)


def _hamming_ball_volume(d: int, radius: int) -> int:
    return sum(math.comb(d, i) for i in range(radius + 1))


def _check_feasible(count: int, d: int, min_distance: int):
    """Packing-bound screen: fail fast on geometrically impossible requests."""
    radius = (min_distance - 1) // 2
    if count * _hamming_ball_volume(d, radius) > 2 ** d:
        raise ValueError(
            f"{count} keys of {d} bits with pairwise distance >= {min_distance} "
            f"exceed the packing bound; lower min_distance or count")


def generate_templates(count: int = DEFAULT_TEMPLATE_COUNT,
                       key_bits: int = DEFAULT_KEY_BITS,
                       seed: int = 0,
                       min_distance: int | None = None) -> TemplateSet:
    """Draw `count` random keys with pairwise distance >= min_distance.

    min_distance defaults to key_bits // 3. Uses rejection sampling with
    a bounded draw budget; infeasible geometry is rejected up front by a
    packing bound.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if key_bits < 1:
        raise ValueError("key_bits must be >= 1")
    if min_distance is None:
        min_distance = key_bits // 3
    _check_feasible(count, key_bits, min_distance)
    rng = np.random.default_rng(int(seed))
    keys = np.zeros((count, key_bits), dtype=np.uint8)
    accepted = 0
    budget = _DRAW_BUDGET_PER_KEY * count
    draws = 0
    while accepted < count:
        if draws >= budget:
            raise ValueError(
                f"could not place {count} keys at distance >= {min_distance} "
                f"within {budget} draws (got {accepted}); lower min_distance")
        cand = rng.integers(0, 2, size=key_bits, dtype=np.uint8)
        draws += 1
        if accepted:
            dist = np.count_nonzero(keys[:accepted] != cand, axis=1)
            if dist.min() < min_distance:
                continue
        keys[accepted] = cand
        accepted += 1
    return TemplateSet(keys, seed=int(seed), min_distance=int(min_distance))


def codeword_templates(code, count: int = DEFAULT_TEMPLATE_COUNT,
                       seed: int = 0,
                       min_distance: int | None = None) -> TemplateSet:
    """Template keys that are codewords of `code`.

    Random distinct data words are drawn and encoded; a candidate is
    kept only if its codeword clears the pairwise distance floor against
    the ones already kept. The resulting keys double as protected
    payloads: stripping the first k bits of a matched key recovers the
    data word, and the decoder can repair channel errors in the key
    itself.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if count > 2 ** code.k_data:
        raise ValueError(f"cannot draw {count} distinct {code.k_data}-bit words")
    if min_distance is None:
        min_distance = code.n_code // 3
    _check_feasible(count, code.n_code, min_distance)
    rng = np.random.default_rng(int(seed))
    words = np.zeros((count, code.k_data), dtype=np.uint8)
    keys = np.zeros((count, code.n_code), dtype=np.uint8)
    accepted = 0
    budget = _DRAW_BUDGET_PER_KEY * count
    draws = 0
    seen = set()
    while accepted < count:
        if draws >= budget:
            raise ValueError(
                f"could not place {count} codeword keys at distance >= "
                f"{min_distance} within {budget} draws; lower min_distance")
        w = rng.integers(0, 2, size=code.k_data, dtype=np.uint8)
        draws += 1
        tw = w.tobytes()
        if tw in seen:
            continue
        cw = code.encode_batch(w[None, :])[0]
        if accepted:
            dist = np.count_nonzero(keys[:accepted] != cw, axis=1)
            if dist.min() < min_distance:
                continue
        seen.add(tw)
        words[accepted] = w
        keys[accepted] = cw
        accepted += 1
    return TemplateSet(keys, seed=int(seed), min_distance=int(min_distance),
                       data_words=words)


# ----------------------------------------------------------------------
# Frame-index side channel


def control_capacity(template_count: int, frames: int) -> int:
    """Bits conveyed by assigning one of M templates to each of F frames.

    Requires M to be a power of two so per-frame capacity is integral.
    """
    if frames < 1:
        raise ValueError("frames must be >= 1")
    if template_count < 2:
        raise ValueError("need at least 2 templates to convey information")
    if template_count & (template_count - 1):
        raise ValueError(
            f"template_count {template_count} is not a power of two; "
            f"per-frame capacity would be fractional")
    return frames * (template_count.bit_length() - 1)


@dataclass(frozen=True)
class ControlSequence:
    """An assignment of template indices to a run of frames."""

    template_indices: tuple
    template_count: int

    def __post_init__(self):
        if self.template_count < 1:
            raise ValueError("template_count must be >= 1")
        if not self.template_indices:
            raise ValueError("template_indices must be non-empty")
        for i in self.template_indices:
            if not 0 <= i < self.template_count:
                raise ValueError(f"template index {i} out of range [0, {self.template_count})")

    def __len__(self) -> int:
        return len(self.template_indices)


@dataclass(frozen=True)
class DecodedControl:
    """Nearest-template decode of extracted keys with per-frame confidence."""

    sequence: ControlSequence
    similarities: tuple
    accepted: tuple

    @property
    def indices_with_sentinel(self) -> tuple:
        """Matched indices with -1 where the best similarity missed the threshold."""
        return tuple(i if ok else -1
                     for i, ok in zip(self.sequence.template_indices, self.accepted))


def decode_control(extracted, templates: TemplateSet, tau: float = 0.8) -> DecodedControl:
    """Match each extracted key to its nearest template.

    `extracted` is an (N, d) bit array or an object exposing one via a
    .keys attribute. Every frame gets an argmax index and a similarity;
    frames whose best similarity falls below tau are marked unaccepted
    (and surface as -1 in indices_with_sentinel) rather than dropped.
    """
    keys = getattr(extracted, "keys", extracted)
    keys = np.asarray(keys, dtype=np.uint8)
    if keys.ndim != 2:
        raise ValueError(f"expected (N, d) extracted keys, got shape {keys.shape}")
    if not 0.0 < tau <= 1.0:
        raise ValueError("tau must be in (0, 1]")
    sims = similarity_matrix(keys, templates.keys)
    best = sims.argmax(axis=1)
    best_sim = sims[np.arange(keys.shape[0]), best]
    return DecodedControl(
        sequence=ControlSequence(tuple(int(b) for b in best),
                                 template_count=templates.count),
        similarities=tuple(float(s) for s in best_sim),
        accepted=tuple(bool(s >= tau) for s in best_sim),
    )
