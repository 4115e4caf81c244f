"""Detection statistics for extracted watermark payloads.

The central quantity is the probability that an unwatermarked source
would match at least as many payload bits as were observed, under the
null model of independent fair coin flips per bit. It is reported in
log10 so that values like 1e-166 survive serialization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bits import as_bit_array

_NEAR_INT = 1e-9
_TAIL_CUTOFF_NATS = 40.0


def bit_accuracy(sent, received) -> float:
    """Fraction of agreeing bits between two equal-length bit sequences."""
    a, b = as_bit_array(sent), as_bit_array(received)
    if a.size != b.size:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    return float(np.count_nonzero(a == b) / a.size)


def word_accuracy(pairs) -> float:
    """Fraction of (sent, received) word pairs that match exactly.

    Each element of `pairs` is a 2-tuple; the received side may be a
    decode result carrying a .word attribute, or a bit sequence.
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError("need at least one word pair")
    hits = 0
    for sent, received in pairs:
        received = getattr(received, "word", received)
        a, b = as_bit_array(sent), as_bit_array(received)
        if a.size != b.size:
            raise ValueError(f"word length mismatch: {a.size} vs {b.size}")
        hits += bool(np.all(a == b))
    return hits / len(pairs)


def _matched_bit_floor(total_bits: int, accuracy: float) -> int:
    """Smallest matched-bit count consistent with the reported accuracy.

    accuracy*total_bits is snapped to the nearest integer when within
    1e-9 (it usually is, having been computed as a ratio of integers),
    otherwise rounded up.
    """
    x = accuracy * total_bits
    nearest = round(x)
    if abs(x - nearest) < _NEAR_INT * max(1.0, abs(x)):
        return int(nearest)
    return int(math.ceil(x))


def log_p_value(total_bits: int, accuracy: float) -> float:
    """log10 P[Binomial(total_bits, 1/2) >= accuracy * total_bits].

    Summed in the log domain from lgamma-based log binomial terms, so it
    is stable out to hundreds of bits (p-values far below float
    underflow). Terms more than 40 nats below the running sum are
    dropped once past the mode, keeping the relative error of the log
    around 1e-15 while bounding the loop length.
    """
    if total_bits < 1:
        raise ValueError("total_bits must be >= 1")
    if not 0.0 <= accuracy <= 1.0:
        raise ValueError(f"accuracy must be in [0, 1], got {accuracy}")
    n = int(total_bits)
    k0 = _matched_bit_floor(n, accuracy)
    if k0 <= 0:
        return 0.0
    if k0 > n:
        raise ValueError(f"accuracy {accuracy} implies more than {n} matched bits")
    log_half_n = n * math.log(0.5)
    lg_n1 = math.lgamma(n + 1)
    total = -math.inf
    half = n / 2.0
    for k in range(k0, n + 1):
        term = lg_n1 - math.lgamma(k + 1) - math.lgamma(n - k + 1) + log_half_n
        if term > total:
            total = term + math.log1p(math.exp(total - term))
        else:
            total = total + math.log1p(math.exp(term - total))
        if k >= half and total - term > _TAIL_CUTOFF_NATS:
            break
    # a full sum can overshoot log(1) by a few ulps
    return min(0.0, total / math.log(10.0))


@dataclass(frozen=True)
class DetectionReport:
    """Summary of a payload comparison over one or more frames."""

    total_bits: int
    bit_accuracy: float
    log10_p: float
    word_accuracy: float | None = None
    frames: int = 1

    def __post_init__(self):
        if self.total_bits < 1:
            raise ValueError("total_bits must be >= 1")
        if not 0.0 <= self.bit_accuracy <= 1.0:
            raise ValueError("bit_accuracy out of range")
        if self.word_accuracy is not None and not 0.0 <= self.word_accuracy <= 1.0:
            raise ValueError("word_accuracy out of range")

    def to_dict(self) -> dict:
        d = {
            "total_bits": self.total_bits,
            "frames": self.frames,
            "bit_accuracy": self.bit_accuracy,
            "log10_p": self.log10_p,
        }
        if self.word_accuracy is not None:
            d["word_accuracy"] = self.word_accuracy
        return d


def make_report(total_bits: int, accuracy: float, word_accuracy: float | None = None,
                frames: int = 1) -> DetectionReport:
    """Build a DetectionReport, computing the tail probability."""
    return DetectionReport(
        total_bits=int(total_bits),
        bit_accuracy=float(accuracy),
        log10_p=log_p_value(total_bits, accuracy),
        word_accuracy=word_accuracy,
        frames=frames,
    )


def report_from_bits(sent, received, word_pairs=None, frames: int = 1) -> DetectionReport:
    """DetectionReport for two concatenated bit streams (plus optional word pairs)."""
    a = as_bit_array(sent)
    acc = bit_accuracy(sent, received)
    wacc = word_accuracy(word_pairs) if word_pairs else None
    return make_report(a.size, acc, wacc, frames=frames)


def aggregate(reports) -> DetectionReport:
    """Pool per-frame or per-segment reports into one stream-level report.

    Bit accuracy is pooled weighted by bit counts, which makes the
    result identical to a report computed on the concatenated streams.
    Word accuracy pools the same way when every input carries one (bit
    counts stand in for word counts; all reports in a pool use the same
    code), and is dropped otherwise.
    """
    reports = list(reports)
    if not reports:
        raise ValueError("need at least one report")
    total = sum(r.total_bits for r in reports)
    matched = sum(r.bit_accuracy * r.total_bits for r in reports)
    acc = matched / total
    if all(r.word_accuracy is not None for r in reports):
        wacc = sum(r.word_accuracy * r.total_bits for r in reports) / total
    else:
        wacc = None
    frames = sum(r.frames for r in reports)
    return make_report(total, acc, wacc, frames=frames)
