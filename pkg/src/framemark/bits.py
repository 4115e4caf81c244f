"""Bit-string primitives shared by the coding, matching, and channel layers."""

from __future__ import annotations

import numpy as np


def as_bit_array(bits) -> np.ndarray:
    """Coerce a bit sequence to a 1-D uint8 array of 0/1, validating values."""
    if isinstance(bits, BitString):
        return bits.bits
    arr = np.asarray(bits)
    if arr.dtype == bool:
        arr = arr.astype(np.uint8)
    arr = np.asarray(arr, dtype=np.uint8)
    if arr.ndim != 1:
        raise ValueError(f"expected a 1-D bit sequence, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError("bit sequence must be non-empty")
    if arr.max(initial=0) > 1:
        raise ValueError("bit values must be 0 or 1")
    return arr


class BitString:
    """Immutable ordered sequence of bits.

    Supports hex round-tripping (most significant bit first within each
    byte) and elementwise equality. Used for payload words, codewords,
    and per-frame keys.
    """

    __slots__ = ("_bits",)

    def __init__(self, bits):
        arr = as_bit_array(bits).copy()
        arr.setflags(write=False)
        self._bits = arr

    @property
    def bits(self) -> np.ndarray:
        """Read-only uint8 view of the bit values."""
        return self._bits

    def __len__(self) -> int:
        return int(self._bits.size)

    def __iter__(self):
        return iter(int(b) for b in self._bits)

    def __getitem__(self, idx):
        if isinstance(idx, slice):
            return BitString(self._bits[idx])
        return int(self._bits[idx])

    def __eq__(self, other) -> bool:
        if isinstance(other, BitString):
            other = other._bits
        else:
            try:
                other = as_bit_array(other)
            except (ValueError, TypeError):
                return NotImplemented
        return self._bits.shape == other.shape and bool(np.all(self._bits == other))

    def __hash__(self) -> int:
        return hash((len(self), self._bits.tobytes()))

    def __repr__(self) -> str:
        return f"BitString({self.to01()!r})"

    def to01(self) -> str:
        """Render as a string of '0'/'1' characters."""
        return "".join("1" if b else "0" for b in self._bits)

    @classmethod
    def from01(cls, s: str) -> "BitString":
        if not s or set(s) - {"0", "1"}:
            raise ValueError("expected a non-empty string of 0/1 characters")
        return cls([1 if c == "1" else 0 for c in s])

    def to_hex(self) -> str:
        """Hex encoding, MSB-first within each byte, zero-padded at the tail."""
        return np.packbits(self._bits).tobytes().hex()

    @classmethod
    def from_hex(cls, s: str, length: int | None = None) -> "BitString":
        """Inverse of to_hex. `length` trims padding; defaults to 4 bits per digit."""
        s = s.strip().lower()
        if length is None:
            length = 4 * len(s)
        if len(s) % 2:
            s = s + "0"
        try:
            raw = bytes.fromhex(s)
        except ValueError as exc:
            raise ValueError(f"invalid hex string {s!r}") from exc
        bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8))
        if length > bits.size:
            raise ValueError(f"requested {length} bits but hex encodes only {bits.size}")
        if np.any(bits[length:]):
            raise ValueError(f"nonzero padding bits beyond position {length}")
        return cls(bits[:length])

    @classmethod
    def random(cls, n: int, rng: np.random.Generator) -> "BitString":
        """Uniform random bit string of length n drawn from `rng`."""
        if n < 1:
            raise ValueError("length must be >= 1")
        return cls(rng.integers(0, 2, size=n, dtype=np.uint8))

    def __xor__(self, other) -> "BitString":
        other = as_bit_array(other)
        if other.size != len(self):
            raise ValueError(f"length mismatch: {len(self)} vs {other.size}")
        return BitString(self._bits ^ other)


def hamming_distance(a, b) -> int:
    """Number of positions where two equal-length bit sequences differ."""
    av, bv = as_bit_array(a), as_bit_array(b)
    if av.size != bv.size:
        raise ValueError(f"length mismatch: {av.size} vs {bv.size}")
    return int(np.count_nonzero(av != bv))


def hamming_similarity(a, b) -> float:
    """Fraction of agreeing positions between two equal-length bit sequences."""
    av, bv = as_bit_array(a), as_bit_array(b)
    if av.size != bv.size:
        raise ValueError(f"length mismatch: {av.size} vs {bv.size}")
    return 1.0 - np.count_nonzero(av != bv) / av.size


def similarity_matrix(keys: np.ndarray, templates: np.ndarray) -> np.ndarray:
    """Pairwise agreement fractions between rows of `keys` (N,d) and `templates` (M,d).

    Returns an (N, M) float array. Computed as a matrix product so it stays
    fast for Monte-Carlo batches (keys may also be (T, N, d); the template
    axis is appended last).
    """
    keys = np.asarray(keys, dtype=np.uint8)
    templates = np.asarray(templates, dtype=np.uint8)
    if keys.shape[-1] != templates.shape[-1]:
        raise ValueError(
            f"key length {keys.shape[-1]} != template length {templates.shape[-1]}"
        )
    d = templates.shape[-1]
    # agreements = d - hamming = d - (k + t - 2*k.t) with k,t in {0,1}
    kf = keys.astype(np.float32)
    tf = templates.astype(np.float32)
    dots = kf @ tf.T
    agree = d - kf.sum(axis=-1, keepdims=True) - tf.sum(axis=-1) + 2.0 * dots
    return agree / d
