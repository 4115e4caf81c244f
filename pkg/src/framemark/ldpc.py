"""Systematic low-density parity-check coding for short payload words.

A (48, 16) rate-1/3 code protects each 16-bit payload word embedded in a
frame. The parity-check matrix is a seeded sparse construction (column
weight 3, near-balanced row weights) put into systematic form by GF(2)
elimination, so the first 16 codeword bits are the data word verbatim.
Decoding is sum-product belief propagation with hard-decision channel
inputs at a fixed crossover prior.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bits import BitString, as_bit_array

DEFAULT_K = 16
DEFAULT_N = 48
DEFAULT_COLUMN_WEIGHT = 3
DEFAULT_BP_ITERATIONS = 50
DEFAULT_CROSSOVER_PRIOR = 0.05

_TANH_CLIP = 30.0
_ATANH_CLIP = 1.0 - 1e-12
_BUILD_ATTEMPTS = 500


class LdpcConstructionError(RuntimeError):
    """Raised when no full-rank systematic code exists within the retry budget."""


@dataclass(frozen=True)
class DecodeResult:
    """Outcome of decoding one received codeword."""

    word: BitString
    corrected_bit_count: int
    converged: bool


class LdpcCode:
    """A systematic binary LDPC code with a belief-propagation decoder.

    Instances are built by build_ldpc(); the constructor takes a
    ready-made parity-check matrix already in systematic form (identity
    on the last n-k columns after elimination is *not* required, only
    that the stored encoder matches H).
    """

    def __init__(self, parity_matrix: np.ndarray, encoder: np.ndarray, seed: int,
                 max_bp_iterations: int = DEFAULT_BP_ITERATIONS,
                 channel_crossover_prior: float = DEFAULT_CROSSOVER_PRIOR):
        H = np.asarray(parity_matrix, dtype=np.uint8)
        if H.ndim != 2:
            raise ValueError("parity matrix must be 2-D")
        m, n = H.shape
        k = n - m
        E = np.asarray(encoder, dtype=np.uint8)
        if E.shape != (m, k):
            raise ValueError(f"encoder shape {E.shape} does not match ({m}, {k})")
        if not 0.0 < channel_crossover_prior < 0.5:
            raise ValueError("channel_crossover_prior must be in (0, 0.5)")
        if max_bp_iterations < 1:
            raise ValueError("max_bp_iterations must be >= 1")
        H = H.copy()
        H.setflags(write=False)
        E = E.copy()
        E.setflags(write=False)
        self._H = H
        self._E = E
        self.seed = int(seed)
        self.k_data = k
        self.n_code = n
        self.max_bp_iterations = int(max_bp_iterations)
        self.channel_crossover_prior = float(channel_crossover_prior)
        self._build_message_tables()

    # ------------------------------------------------------------------
    @property
    def parity_matrix(self) -> np.ndarray:
        """Read-only (n-k, n) parity-check matrix."""
        return self._H

    @property
    def rate(self) -> float:
        return self.k_data / self.n_code

    def __repr__(self) -> str:
        return f"LdpcCode(n={self.n_code}, k={self.k_data}, seed={self.seed})"

    # ------------------------------------------------------------------
    def _build_message_tables(self):
        H = self._H
        m, n = H.shape
        rows_e, cols_e = np.nonzero(H)  # row-major: edges grouped by check row
        row_w = H.sum(axis=1).astype(np.int64)
        col_w = H.sum(axis=0).astype(np.int64)
        Wr = int(row_w.max())
        Wc = int(col_w.max())
        row_start = np.concatenate(([0], np.cumsum(row_w)))
        slot = np.arange(rows_e.size) - row_start[rows_e]
        self._edge_col = cols_e
        self._edge_flat = rows_e * Wr + slot  # position in a padded (m, Wr) table
        self._Wr = Wr
        # per-column gather table of edge ids, padded with edge 0 + mask
        order = np.argsort(cols_e, kind="stable")
        col_start = np.concatenate(([0], np.cumsum(col_w)))
        col_edges = np.zeros((n, Wc), dtype=np.int64)
        col_mask = np.zeros((n, Wc), dtype=np.float64)
        for c in range(n):
            ids = order[col_start[c]:col_start[c + 1]]
            col_edges[c, :ids.size] = ids
            col_mask[c, :ids.size] = 1.0
        self._col_edges = col_edges
        self._col_mask = col_mask
        self._HT = H.T.astype(np.int64)

    def _syndrome_zero(self, hard: np.ndarray) -> np.ndarray:
        """True per row of `hard` (B, n) when all parity checks are satisfied."""
        return ~np.any((hard.astype(np.int64) @ self._HT) & 1, axis=1)

    # ------------------------------------------------------------------
    def encode_batch(self, words: np.ndarray) -> np.ndarray:
        """Encode (B, k) data bits to (B, n) codewords."""
        words = np.asarray(words, dtype=np.uint8)
        if words.ndim != 2 or words.shape[1] != self.k_data:
            raise ValueError(f"expected (B, {self.k_data}) words, got shape {words.shape}")
        parity = (words.astype(np.int64) @ self._E.T.astype(np.int64)) & 1
        return np.concatenate([words, parity.astype(np.uint8)], axis=1)

    def decode_batch(self, received: np.ndarray,
                     max_iterations: int | None = None):
        """Decode (B, n) hard-decision words.

        Returns (codewords (B, n), data words (B, k), corrected bit
        counts (B,), converged flags (B,)). Inputs that already satisfy
        every parity check are returned untouched with zero corrections.
        """
        rx = np.asarray(received, dtype=np.uint8)
        if rx.ndim != 2 or rx.shape[1] != self.n_code:
            raise ValueError(f"expected (B, {self.n_code}) bits, got shape {rx.shape}")
        iters = self.max_bp_iterations if max_iterations is None else int(max_iterations)
        out = rx.copy()
        conv = self._syndrome_zero(out)
        todo = np.nonzero(~conv)[0]
        if todo.size:
            hard, ok = self._bp(rx[todo], iters)
            out[todo] = hard
            conv[todo] = ok
        corrected = np.count_nonzero(out != rx, axis=1)
        return out, out[:, :self.k_data], corrected, conv

    def _bp(self, rx: np.ndarray, iters: int):
        """Sum-product message passing on rows that fail the syndrome check."""
        B = rx.shape[0]
        m, n = self._H.shape
        Wr = self._Wr
        p = self.channel_crossover_prior
        lmag = np.log((1.0 - p) / p)
        Lch = np.where(rx == 0, lmag, -lmag)
        hard = rx.copy()
        done = np.zeros(B, dtype=bool)
        remaining = np.arange(B)
        v2c = Lch[:, self._edge_col]
        Lch_act = Lch
        for it in range(iters):
            t = np.tanh(0.5 * np.clip(v2c, -_TANH_CLIP, _TANH_CLIP))
            T = np.ones((remaining.size, m * Wr))
            T[:, self._edge_flat] = t
            T = T.reshape(remaining.size, m, Wr)
            pre = np.cumprod(T, axis=2)
            suf = np.cumprod(T[:, :, ::-1], axis=2)[:, :, ::-1]
            ex = np.ones_like(T)
            ex[:, :, 1:] *= pre[:, :, :-1]
            ex[:, :, :-1] *= suf[:, :, 1:]
            exc = ex.reshape(remaining.size, m * Wr)[:, self._edge_flat]
            c2v = 2.0 * np.arctanh(np.clip(exc, -_ATANH_CLIP, _ATANH_CLIP))
            tot = (c2v[:, self._col_edges] * self._col_mask).sum(axis=2)
            post = Lch_act + tot
            hard_act = (post < 0.0).astype(np.uint8)
            ok = self._syndrome_zero(hard_act)
            hard[remaining[ok]] = hard_act[ok]
            done[remaining[ok]] = True
            keep = ~ok
            if not keep.any():
                break
            if it == iters - 1:
                hard[remaining[keep]] = hard_act[keep]
                break
            v2c = (post[:, self._edge_col] - c2v)[keep]
            Lch_act = Lch_act[keep]
            remaining = remaining[keep]
        return hard, done


def build_ldpc(seed: int, k_data: int = DEFAULT_K, n_code: int = DEFAULT_N, *,
               column_weight: int = DEFAULT_COLUMN_WEIGHT,
               max_bp_iterations: int = DEFAULT_BP_ITERATIONS,
               channel_crossover_prior: float = DEFAULT_CROSSOVER_PRIOR) -> LdpcCode:
    """Construct a systematic (n_code, k_data) code from a seed.

    Sparse columns of weight `column_weight` are assigned to the least
    loaded check rows with seeded tie-breaking, then the matrix is put
    into systematic form by GF(2) elimination over the parity columns
    (swapping in data columns when a pivot is missing). Construction
    retries with fresh randomness up to a fixed budget and fails loudly
    if the seed never yields a full-rank matrix.
    """
    k, n = int(k_data), int(n_code)
    if k < 1:
        raise ValueError("k_data must be >= 1")
    if n <= k:
        raise ValueError(f"n_code must exceed k_data, got n={n} k={k} (no parity bits)")
    m = n - k
    if column_weight < 2:
        raise ValueError("column_weight must be >= 2")
    if column_weight > m:
        raise ValueError(f"column_weight {column_weight} exceeds check count {m}")
    rng = np.random.default_rng(int(seed))
    for _ in range(_BUILD_ATTEMPTS):
        H = _draw_sparse(rng, m, n, column_weight)
        if H is None:
            continue
        sys = _systematize(H, k)
        if sys is None:
            continue
        H_sys, encoder = sys
        return LdpcCode(H_sys, encoder, seed,
                        max_bp_iterations=max_bp_iterations,
                        channel_crossover_prior=channel_crossover_prior)
    raise LdpcConstructionError(
        f"no full-rank ({n},{k}) construction found for seed {seed} "
        f"after {_BUILD_ATTEMPTS} attempts")


def _draw_sparse(rng: np.random.Generator, m: int, n: int, colw: int):
    """One seeded draw of a column-weight-`colw` sparse matrix, or None."""
    H = np.zeros((m, n), dtype=np.uint8)
    load = np.zeros(m, dtype=np.int64)
    for c in rng.permutation(n):
        order = np.lexsort((rng.random(m), load))
        rows = order[:colw]
        H[rows, c] = 1
        load[rows] += 1
    cols = {tuple(col) for col in H.T.tolist()}
    if len(cols) < n:
        return None  # duplicate columns: undetectable 2-bit patterns
    return H


def _systematize(H: np.ndarray, k: int):
    """Eliminate over the last n-k columns; returns (H', encoder) or None.

    Column swaps (pulling a data column into the parity block) are
    applied to H itself so the returned matrix and encoder agree. After
    success, parity = encoder @ word (mod 2).
    """
    m, n = H.shape
    H = H.copy()
    R = H.copy()
    for i in range(m):
        col = k + i
        piv = _first_nonzero(R, i, col)
        if piv is None:
            swap = None
            for lc in range(k):
                if _first_nonzero(R, i, lc) is not None:
                    swap = lc
                    break
            if swap is None:
                return None  # rank-deficient
            H[:, [col, swap]] = H[:, [swap, col]]
            R[:, [col, swap]] = R[:, [swap, col]]
            piv = _first_nonzero(R, i, col)
        if piv != i:
            R[[i, piv]] = R[[piv, i]]
        mask = R[:, col].copy()
        mask[i] = 0
        R[mask == 1] ^= R[i]
    return H, R[:, :k].copy()


def _first_nonzero(R: np.ndarray, start_row: int, col: int):
    nz = np.nonzero(R[start_row:, col])[0]
    return None if nz.size == 0 else int(start_row + nz[0])


def ldpc_encode(code: LdpcCode, word) -> BitString:
    """Encode one k-bit data word to its n-bit codeword."""
    bits = as_bit_array(word)
    if bits.size != code.k_data:
        raise ValueError(f"data word must have {code.k_data} bits, got {bits.size}")
    return BitString(code.encode_batch(bits[None, :])[0])


def ldpc_decode(code: LdpcCode, received) -> DecodeResult:
    """Decode one n-bit received word to a DecodeResult."""
    bits = as_bit_array(received)
    if bits.size != code.n_code:
        raise ValueError(f"received word must have {code.n_code} bits, got {bits.size}")
    _, words, corrected, conv = code.decode_batch(bits[None, :])
    return DecodeResult(word=BitString(words[0]),
                        corrected_bit_count=int(corrected[0]),
                        converged=bool(conv[0]))
