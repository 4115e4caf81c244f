"""Temporal tamper localization from per-frame keys.

Each frame of a marked clip carries one key from a known template set.
After an edit (frame swaps, drops, insertions) plus extraction noise,
matching every recovered key against the templates and comparing the
matched indices with the expected assignment localizes what happened
and where.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .bits import BitString, hamming_similarity, similarity_matrix
from .templates import TemplateSet

DEFAULT_TAU = 0.8
INSERTED = -1  # sentinel index for frames matching no template


class FrameKeyMatrix:
    """Read-only (N, d) matrix of per-frame key bits."""

    def __init__(self, keys):
        keys = np.asarray(keys, dtype=np.uint8)
        if keys.ndim != 2 or keys.shape[0] < 1:
            raise ValueError(f"expected a non-empty (N, d) bit matrix, got {keys.shape}")
        if keys.max(initial=0) > 1:
            raise ValueError("keys must be 0/1 valued")
        keys = keys.copy()
        keys.setflags(write=False)
        self._keys = keys

    @property
    def keys(self) -> np.ndarray:
        return self._keys

    @property
    def key_bits(self) -> int:
        return int(self._keys.shape[1])

    def __len__(self) -> int:
        return int(self._keys.shape[0])

    def key(self, i: int) -> BitString:
        return BitString(self._keys[i])

    @classmethod
    def from_bitstrings(cls, strings) -> "FrameKeyMatrix":
        return cls(np.stack([BitString(s).bits if not isinstance(s, BitString) else s.bits
                             for s in strings]))


def _as_keys(obj) -> np.ndarray:
    keys = getattr(obj, "keys", obj)
    keys = np.asarray(keys, dtype=np.uint8)
    if keys.ndim != 2 or keys.shape[0] < 1:
        raise ValueError(f"expected a non-empty (N, d) key matrix, got shape {keys.shape}")
    return keys


def validate_truth(truth, template_count: int | None = None) -> tuple:
    """Normalize a ground-truth index sequence (-1 marks inserted frames)."""
    out = tuple(int(t) for t in truth)
    if not out:
        raise ValueError("truth sequence must be non-empty")
    for t in out:
        if t < INSERTED:
            raise ValueError(f"truth index {t} invalid (must be >= -1)")
        if template_count is not None and t >= template_count:
            raise ValueError(f"truth index {t} out of range [0, {template_count})")
    return out


@dataclass(frozen=True)
class LocalizationResult:
    """Per-frame matching outcome against a template set."""

    predicted: tuple
    similarities: tuple
    accuracy: float
    tau: float

    def to_dict(self) -> dict:
        return {
            "predicted": list(self.predicted),
            "similarities": [round(s, 6) for s in self.similarities],
            "accuracy": self.accuracy,
            "tau": self.tau,
        }


def localize(templates: TemplateSet, extracted, truth,
             tau: float = DEFAULT_TAU) -> LocalizationResult:
    """Match extracted keys to templates and score against ground truth.

    Every frame is assigned the argmax-similarity template (ties resolve
    to the lowest index); frames whose best similarity falls below tau
    are marked inserted (-1). Accuracy is the fraction of frames whose
    assignment equals the ground-truth index.
    """
    keys = _as_keys(extracted)
    if keys.shape[1] != templates.key_bits:
        raise ValueError(
            f"key length {keys.shape[1]} != template length {templates.key_bits}")
    if not 0.0 < tau <= 1.0:
        raise ValueError("tau must be in (0, 1]")
    truth = validate_truth(truth, templates.count)
    if len(truth) != keys.shape[0]:
        raise ValueError(f"truth length {len(truth)} != frame count {keys.shape[0]}")
    sims = similarity_matrix(keys, templates.keys)
    best = sims.argmax(axis=1)
    best_sim = sims[np.arange(keys.shape[0]), best]
    predicted = np.where(best_sim >= tau, best, INSERTED)
    accuracy = float(np.mean(predicted == np.asarray(truth)))
    return LocalizationResult(
        predicted=tuple(int(p) for p in predicted),
        similarities=tuple(float(s) for s in best_sim),
        accuracy=accuracy,
        tau=float(tau),
    )


# ----------------------------------------------------------------------
# Tamper operators


@dataclass(frozen=True)
class TamperSpec:
    """A reproducible composition of frame edits.

    Application order is fixed: swaps, then drops, then insertions.
    Indices in swap_pairs and drop_indices refer to the original frame
    positions; insert_positions are slots in the post-insertion
    sequence. `seed` drives inserted-key content (and positions when
    insert_positions is None).
    """

    swap_pairs: tuple = ()
    drop_indices: tuple = ()
    insert_count: int = 0
    insert_positions: tuple | None = None
    seed: int = 0

    def __post_init__(self):
        pairs = tuple((int(a), int(b)) for a, b in self.swap_pairs)
        object.__setattr__(self, "swap_pairs", pairs)
        flat = [i for p in pairs for i in p]
        if len(set(flat)) != len(flat):
            raise ValueError("swap pairs must use disjoint indices")
        for a, b in pairs:
            if a == b or a < 0 or b < 0:
                raise ValueError(f"invalid swap pair ({a}, {b})")
        drops = tuple(int(i) for i in self.drop_indices)
        object.__setattr__(self, "drop_indices", drops)
        if len(set(drops)) != len(drops):
            raise ValueError("drop indices must be distinct")
        if any(i < 0 for i in drops):
            raise ValueError("drop indices must be non-negative")
        if self.insert_count < 0:
            raise ValueError("insert_count must be >= 0")
        if self.insert_positions is not None:
            pos = tuple(int(p) for p in self.insert_positions)
            object.__setattr__(self, "insert_positions", pos)
            if len(pos) != self.insert_count:
                raise ValueError("insert_positions length must equal insert_count")

    @property
    def is_identity(self) -> bool:
        return not self.swap_pairs and not self.drop_indices and self.insert_count == 0

    def to_dict(self) -> dict:
        return {
            "swap_pairs": [list(p) for p in self.swap_pairs],
            "drop_indices": list(self.drop_indices),
            "insert_count": self.insert_count,
            "insert_positions": (None if self.insert_positions is None
                                 else list(self.insert_positions)),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TamperSpec":
        return cls(
            swap_pairs=tuple(tuple(p) for p in d.get("swap_pairs", ())),
            drop_indices=tuple(d.get("drop_indices", ())),
            insert_count=int(d.get("insert_count", 0)),
            insert_positions=(None if d.get("insert_positions") is None
                              else tuple(d["insert_positions"])),
            seed=int(d.get("seed", 0)),
        )


def apply_swap(keys, truth, pairs):
    """Exchange frame pairs; returns (keys, truth) with both reordered."""
    keys = _as_keys(keys).copy()
    truth = list(validate_truth(truth))
    n = keys.shape[0]
    if len(truth) != n:
        raise ValueError("truth length must match frame count")
    flat = [i for p in pairs for i in p]
    if len(set(flat)) != len(flat):
        raise ValueError("swap pairs must use disjoint indices")
    for a, b in pairs:
        a, b = int(a), int(b)
        if not (0 <= a < n and 0 <= b < n) or a == b:
            raise ValueError(f"swap pair ({a}, {b}) invalid for {n} frames")
        keys[[a, b]] = keys[[b, a]]
        truth[a], truth[b] = truth[b], truth[a]
    return keys, tuple(truth)


def apply_drop(keys, truth, indices):
    """Remove frames at `indices`; survivors keep their relative order."""
    keys = _as_keys(keys)
    truth = validate_truth(truth)
    n = keys.shape[0]
    if len(truth) != n:
        raise ValueError("truth length must match frame count")
    idx = [int(i) for i in indices]
    if len(set(idx)) != len(idx):
        raise ValueError("drop indices must be distinct")
    for i in idx:
        if not 0 <= i < n:
            raise ValueError(f"drop index {i} out of range for {n} frames")
    if len(idx) >= n:
        raise ValueError("cannot drop every frame")
    keep = np.setdiff1d(np.arange(n), np.asarray(idx, dtype=np.int64))
    return keys[keep].copy(), tuple(truth[i] for i in keep)


def apply_insert(keys, truth, count: int, rng: np.random.Generator,
                 positions=None):
    """Insert `count` uniform-random keys; inserted slots get truth -1.

    `positions` are slots in the final sequence; when omitted they are
    drawn from `rng` (which also supplies the key bits).
    """
    keys = _as_keys(keys)
    truth = validate_truth(truth)
    n, d = keys.shape
    if len(truth) != n:
        raise ValueError("truth length must match frame count")
    if count < 0:
        raise ValueError("count must be >= 0")
    if count == 0:
        return keys.copy(), truth
    total = n + count
    if positions is None:
        slots = np.sort(rng.choice(total, size=count, replace=False))
    else:
        slots = np.sort(np.asarray([int(p) for p in positions], dtype=np.int64))
        if slots.size != count:
            raise ValueError("positions length must equal count")
        if len(set(slots.tolist())) != count:
            raise ValueError("insert positions must be distinct")
        if slots.min() < 0 or slots.max() >= total:
            raise ValueError(f"insert positions must lie in [0, {total})")
    noise = rng.integers(0, 2, size=(count, d), dtype=np.uint8)
    out = np.zeros((total, d), dtype=np.uint8)
    out_truth = np.full(total, INSERTED, dtype=np.int64)
    mask = np.ones(total, dtype=bool)
    mask[slots] = False
    out[slots] = noise
    out[mask] = keys
    out_truth[mask] = np.asarray(truth, dtype=np.int64)
    return out, tuple(int(t) for t in out_truth)


def apply_combined(keys, truth, spec: TamperSpec):
    """Apply a TamperSpec: swaps, then drops, then insertions."""
    rng = np.random.default_rng(int(spec.seed))
    keys = _as_keys(keys)
    truth = validate_truth(truth)
    if spec.swap_pairs:
        keys, truth = apply_swap(keys, truth, spec.swap_pairs)
    if spec.drop_indices:
        keys, truth = apply_drop(keys, truth, spec.drop_indices)
    if spec.insert_count:
        keys, truth = apply_insert(keys, truth, spec.insert_count, rng,
                                   positions=spec.insert_positions)
    return keys, truth


# ----------------------------------------------------------------------
# Mismatch diagnosis


@dataclass(frozen=True)
class TamperEvents:
    """Edit events consistent with a predicted-vs-expected mismatch."""

    swaps: tuple = ()
    drops: tuple = ()
    inserts: tuple = ()

    @property
    def any(self) -> bool:
        return bool(self.swaps or self.drops or self.inserts)

    def to_dict(self) -> dict:
        return {
            "swaps": [list(p) for p in self.swaps],
            "drops": list(self.drops),
            "inserts": list(self.inserts),
        }


def diagnose(predicted, expected_order) -> TamperEvents:
    """Classify a matched-index sequence against the expected assignment.

    Frames matching no template (-1) are insertion events, reported by
    their position in the observed sequence; so are frames matching a
    template with no remaining expected occurrence. Expected occurrences
    that never appear are drops, reported by template index. Out-of-order
    survivors are decomposed into adjacent transpositions, each reported
    as the pair of template indices exchanged.

    Repeated template indices in `expected_order` are matched greedily
    left to right, so diagnosis is sharpest when indices are unique
    within the analyzed window (window length <= template count).
    """
    predicted = tuple(int(p) for p in predicted)
    expected = tuple(int(e) for e in expected_order)
    inserts = [i for i, p in enumerate(predicted) if p == INSERTED]
    slots: dict[int, deque] = {}
    for pos, v in enumerate(expected):
        slots.setdefault(v, deque()).append(pos)
    ranks = []
    for i, p in enumerate(predicted):
        if p == INSERTED:
            continue
        q = slots.get(p)
        if q:
            ranks.append(q.popleft())
        else:
            inserts.append(i)  # matched a template not expected (again)
    drops = sorted(pos for q in slots.values() for pos in q)
    swaps = []
    r = list(ranks)
    for i in range(len(r)):
        for j in range(len(r) - 1 - i):
            if r[j] > r[j + 1]:
                swaps.append((expected[r[j + 1]], expected[r[j]]))
                r[j], r[j + 1] = r[j + 1], r[j]
    return TamperEvents(
        swaps=tuple(swaps),
        drops=tuple(expected[p] for p in drops),
        inserts=tuple(sorted(inserts)),
    )
