"""Noisy-extraction channel models and Monte-Carlo pipeline studies.

Extraction after a given video distortion is modeled as a bit-flip
channel acting on the embedded keys: i.i.d. flips at a calibrated rate,
or a two-state burst process for correlated errors. Presets map common
distortions to their measured post-repair extraction accuracies.

The simulation pipeline composes payload coding, template assignment,
frame tampering, channel noise, and localization, with per-trial
substreams so results are reproducible and independent of chunking.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import rng as rngmod
from .ldpc import LdpcCode
from .localize import INSERTED, TamperSpec, validate_truth
from .stats import DetectionReport, make_report
from .templates import TemplateSet

# Measured extraction accuracy after each distortion (post-repair stage),
# from which the preset flip rates are derived as 1 - accuracy.
PRESET_ACCURACY = {
    "clean": 0.983,
    "resize": 0.679,
    "jpeg": 0.723,
    "crop": 0.970,
    "rotation25": 0.630,
    "rotation90": 0.483,
    "brightness": 0.965,
    "contrast": 0.757,
    "saturation": 0.967,
    "sharpness": 0.972,
    "gaussian_noise": 0.882,
    "mpeg4": 0.723,
}


@dataclass(frozen=True)
class ChannelModel:
    """A bit-flip channel: i.i.d. at rate `ber`, or bursty when the
    two-state parameters are set (good state never flips; the marginal
    rate is then determined by the chain's stationary distribution)."""

    name: str
    ber: float
    p_good_to_bad: float | None = None
    p_bad_to_good: float | None = None
    ber_bad: float | None = None

    def __post_init__(self):
        burst_fields = (self.p_good_to_bad, self.p_bad_to_good, self.ber_bad)
        if any(f is not None for f in burst_fields):
            if any(f is None for f in burst_fields):
                raise ValueError("burst channels need all of p_good_to_bad, "
                                 "p_bad_to_good, ber_bad")
            if not 0.0 < self.p_good_to_bad <= 1.0:
                raise ValueError("p_good_to_bad must be in (0, 1]")
            if not 0.0 < self.p_bad_to_good <= 1.0:
                raise ValueError("p_bad_to_good must be in (0, 1]")
            if not 0.0 <= self.ber_bad <= 1.0:
                raise ValueError("ber_bad must be in [0, 1]")
            expect = self.stationary_bad * self.ber_bad
            if abs(expect - self.ber) > 1e-9:
                raise ValueError(
                    f"marginal ber {self.ber} inconsistent with burst parameters "
                    f"(stationary rate {expect:.6g})")
        elif not 0.0 <= self.ber <= 0.5:
            raise ValueError(f"ber must be in [0, 0.5], got {self.ber}")

    @property
    def is_burst(self) -> bool:
        return self.p_good_to_bad is not None

    @property
    def stationary_bad(self) -> float:
        """Stationary probability of the bad state (0 for i.i.d. channels)."""
        if not self.is_burst:
            return 0.0
        return self.p_good_to_bad / (self.p_good_to_bad + self.p_bad_to_good)

    @property
    def mean_burst_length(self) -> float:
        if not self.is_burst:
            raise ValueError("mean_burst_length only defined for burst channels")
        return 1.0 / self.p_bad_to_good


def preset(name: str) -> ChannelModel:
    """Channel preset for a named distortion (i.i.d. at the measured rate).

    Measured flip rates above 0.5 (worse than chance before sign repair)
    are clamped to 0.5.
    """
    if name not in PRESET_ACCURACY:
        known = ", ".join(sorted(PRESET_ACCURACY))
        raise ValueError(f"unknown channel preset {name!r}; known presets: {known}")
    ber = min(0.5, round(1.0 - PRESET_ACCURACY[name], 6))
    return ChannelModel(name=name, ber=ber)


def preset_names() -> list:
    return sorted(PRESET_ACCURACY)


def burst_channel(marginal_ber: float, mean_burst_length: float,
                  ber_bad: float = 1.0, name: str | None = None) -> ChannelModel:
    """Two-state burst channel with a given marginal rate and mean burst length."""
    if not 0.0 < marginal_ber <= 0.5:
        raise ValueError("marginal_ber must be in (0, 0.5]")
    if mean_burst_length < 1.0:
        raise ValueError("mean_burst_length must be >= 1")
    if not 0.0 < ber_bad <= 1.0:
        raise ValueError("ber_bad must be in (0, 1]")
    pi_bad = marginal_ber / ber_bad
    if pi_bad >= 1.0:
        raise ValueError("marginal_ber must be below ber_bad")
    p_bg = 1.0 / mean_burst_length
    p_gb = pi_bad * p_bg / (1.0 - pi_bad)
    if p_gb > 1.0:
        raise ValueError("parameters imply p_good_to_bad > 1; raise ber_bad "
                         "or mean_burst_length")
    if name is None:
        name = f"burst_ber{marginal_ber:g}_len{mean_burst_length:g}"
    return ChannelModel(name=name, ber=marginal_ber, p_good_to_bad=p_gb,
                        p_bad_to_good=p_bg, ber_bad=ber_bad)


def clean_window_probability(channel: ChannelModel, window_bits: int) -> float:
    """Exact probability that a window of `window_bits` has no flips."""
    if window_bits < 1:
        raise ValueError("window_bits must be >= 1")
    if not channel.is_burst:
        return (1.0 - channel.ber) ** window_bits
    pi_bad = channel.stationary_bad
    pi = np.array([1.0 - pi_bad, pi_bad])
    T = np.array([
        [1.0 - channel.p_good_to_bad, channel.p_good_to_bad],
        [channel.p_bad_to_good, 1.0 - channel.p_bad_to_good],
    ])
    D = np.diag([1.0, 1.0 - channel.ber_bad])
    v = pi @ D
    for _ in range(window_bits - 1):
        v = v @ T @ D
    return float(v.sum())


def fit_burst_length(marginal_ber: float, target_low: float, target_high: float,
                     window_bits: int = 16, ber_bad: float = 1.0) -> ChannelModel:
    """Shortest mean burst length whose exact clean-window probability for
    `window_bits`-bit words lands in [target_low, target_high].

    Under a fixed marginal rate, longer bursts concentrate flips in fewer
    words and so raise the clean-window probability; the scan therefore
    starts at length 1 and walks upward.
    """
    if not 0.0 < target_low < target_high <= 1.0:
        raise ValueError("need 0 < target_low < target_high <= 1")
    lengths = np.arange(1.0, 16.01, 0.25)
    for ell in lengths:
        ch = burst_channel(marginal_ber, float(ell), ber_bad)
        p = clean_window_probability(ch, window_bits)
        if target_low <= p <= target_high:
            return ch
    raise ValueError(
        f"no mean burst length in [1, 16] gives clean-window probability in "
        f"[{target_low}, {target_high}] at marginal {marginal_ber}")


def fitted_burst_channel() -> ChannelModel:
    """Burst channel at marginal rate 0.05 fitted so that uncoded 16-bit
    word accuracy falls in the calibration bracket [0.30, 0.45]."""
    return fit_burst_length(0.05, 0.30, 0.45, window_bits=16, ber_bad=1.0)


# ----------------------------------------------------------------------
# Flip kernels. Burst chains run along the last axis, one independent
# chain per row, started from the stationary distribution.


def _burst_flips(channel: ChannelModel, u_init, u_flip, u_trans) -> np.ndarray:
    shape = u_flip.shape
    n = shape[-1]
    state = u_init < channel.stationary_bad
    flips = np.zeros(shape, dtype=bool)
    for t in range(n):
        flips[..., t] = state & (u_flip[..., t] < channel.ber_bad)
        if t < n - 1:
            go_bad = ~state & (u_trans[..., t] < channel.p_good_to_bad)
            stay_bad = state & (u_trans[..., t] >= channel.p_bad_to_good)
            state = go_bad | stay_bad
    return flips


def _draw_flip_uniforms(channel: ChannelModel, rows: int, n: int,
                        rng: np.random.Generator):
    """Uniform draws for one trial, in a fixed canonical order."""
    if channel.is_burst:
        return (rng.random(rows), rng.random((rows, n)), rng.random((rows, n)))
    return (rng.random((rows, n)),)


def _flips_from_uniforms(channel: ChannelModel, uniforms) -> np.ndarray:
    if channel.is_burst:
        u_init, u_flip, u_trans = uniforms
        return _burst_flips(channel, u_init, u_flip, u_trans)
    (u,) = uniforms
    return u < channel.ber


def flip_bits(bits, channel: ChannelModel, rng: np.random.Generator):
    """Pass a bit string (or (B, n) matrix) through the channel."""
    from .bits import BitString, as_bit_array

    if isinstance(bits, BitString) or np.asarray(bits).ndim == 1:
        arr = as_bit_array(bits)[None, :]
        single = True
    else:
        arr = np.asarray(bits, dtype=np.uint8)
        if arr.ndim != 2:
            raise ValueError("expected a bit string or (B, n) matrix")
        single = False
    flips = _flips_from_uniforms(
        channel, _draw_flip_uniforms(channel, arr.shape[0], arr.shape[1], rng))
    out = arr ^ flips.astype(np.uint8)
    if single:
        return BitString(out[0]) if isinstance(bits, BitString) else out[0]
    return out


# ----------------------------------------------------------------------
# Pipeline simulation


@dataclass(frozen=True)
class AttackPlan:
    """Counts of random edits applied fresh each trial."""

    swaps: int = 0
    drops: int = 0
    inserts: int = 0

    def __post_init__(self):
        if min(self.swaps, self.drops, self.inserts) < 0:
            raise ValueError("attack counts must be >= 0")

    @property
    def label(self) -> str:
        if self.swaps == self.drops == self.inserts == 0:
            return "none"
        return f"swap{self.swaps}_drop{self.drops}_ins{self.inserts}"

    @property
    def is_identity(self) -> bool:
        return self.swaps == 0 and self.drops == 0 and self.inserts == 0


@dataclass
class SimConfig:
    """One simulation setting: geometry, channel, tamper, and seeds."""

    frames: int
    templates: TemplateSet
    channel: ChannelModel
    tamper: TamperSpec | AttackPlan | None
    trials: int
    master_seed: int
    tau: float = 0.8
    code: LdpcCode | None = None
    chunk_size: int = 2048

    def __post_init__(self):
        if self.frames < 1:
            raise ValueError("frames must be >= 1")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must be in (0, 1]")
        if self.chunk_size < 1:
            raise ValueError("chunk_size must be >= 1")
        plan = self._plan()
        if isinstance(plan, AttackPlan):
            if 2 * plan.swaps > self.frames:
                raise ValueError(f"{plan.swaps} swaps need {2 * plan.swaps} distinct "
                                 f"frames but only {self.frames} exist")
            if plan.drops >= self.frames:
                raise ValueError("cannot drop every frame")
        if self.code is not None and self.templates.data_words is None:
            raise ValueError("word accounting needs codeword templates "
                             "(templates.data_words is unset)")

    def _plan(self):
        return AttackPlan() if self.tamper is None else self.tamper

    @property
    def frames_out(self) -> int:
        """Post-tamper sequence length (constant across trials)."""
        plan = self._plan()
        if isinstance(plan, TamperSpec):
            return self.frames - len(plan.drop_indices) + plan.insert_count
        return self.frames - plan.drops + plan.inserts

    @property
    def attack_label(self) -> str:
        plan = self._plan()
        if isinstance(plan, TamperSpec):
            return ("none" if plan.is_identity else
                    f"spec_swap{len(plan.swap_pairs)}_drop{len(plan.drop_indices)}"
                    f"_ins{plan.insert_count}")
        return plan.label


def _materialize_plan(plan: AttackPlan, frames: int, rng: np.random.Generator):
    """Random per-trial edit, as (surviving original positions, insert slots).

    Draw order is fixed: swap participants, drop indices, insert slots.
    """
    order = np.arange(frames)
    if plan.swaps:
        chosen = rng.choice(frames, size=2 * plan.swaps, replace=False)
        for s in range(plan.swaps):
            a, b = chosen[2 * s], chosen[2 * s + 1]
            order[[a, b]] = order[[b, a]]
    if plan.drops:
        dropped = rng.choice(frames, size=plan.drops, replace=False)
        keep = np.ones(frames, dtype=bool)
        keep[dropped] = False
        order = order[keep]
    total = order.size + plan.inserts
    if plan.inserts:
        slots = np.sort(rng.choice(total, size=plan.inserts, replace=False))
    else:
        slots = np.zeros(0, dtype=np.int64)
    return order, slots


class _TrialSet:
    """Stacked per-trial matching inputs for one chunk."""

    __slots__ = ("truth", "rx")

    def __init__(self, truth, rx):
        self.truth = truth
        self.rx = rx


def _build_chunk(config: SimConfig, trial_ids) -> _TrialSet:
    """Materialize tamper + channel noise for a batch of trials.

    All randomness comes from per-trial substreams keyed by
    (master_seed, "trial", index), so results do not depend on how
    trials are grouped into chunks.
    """
    from .localize import apply_combined

    tpl = config.templates
    M, d = tpl.count, tpl.key_bits
    F = config.frames
    Fo = config.frames_out
    truth0 = np.arange(F, dtype=np.int64) % M
    plan = config._plan()
    B = len(trial_ids)
    uniform_packs = []
    if isinstance(plan, TamperSpec):
        # Deterministic tamper: identical keys and truth every trial.
        fixed_keys, fixed_truth = apply_combined(tpl.keys[truth0], truth0, plan)
        keys = np.broadcast_to(fixed_keys, (B, Fo, d))
        truth = np.broadcast_to(np.asarray(fixed_truth, dtype=np.int64),
                                (B, Fo)).copy()
        for t in trial_ids:
            trng = rngmod.substream(config.master_seed, "trial", int(t))
            uniform_packs.append(_draw_flip_uniforms(config.channel, Fo, d, trng))
    else:
        truth = np.empty((B, Fo), dtype=np.int64)
        noise_rows = []
        for row, t in enumerate(trial_ids):
            trng = rngmod.substream(config.master_seed, "trial", int(t))
            order, slots = _materialize_plan(plan, F, trng)
            tr = np.full(Fo, INSERTED, dtype=np.int64)
            mask = np.ones(Fo, dtype=bool)
            mask[slots] = False
            tr[mask] = truth0[order]
            truth[row] = tr
            noise_rows.append(
                trng.integers(0, 2, size=(slots.size, d), dtype=np.uint8))
            uniform_packs.append(_draw_flip_uniforms(config.channel, Fo, d, trng))
        keys = tpl.keys[np.clip(truth, 0, M - 1)].astype(np.uint8)
        ins_mask = truth == INSERTED
        if ins_mask.any():
            keys[ins_mask] = np.concatenate(noise_rows, axis=0)
    stacked = tuple(np.stack([p[i] for p in uniform_packs])
                    for i in range(len(uniform_packs[0])))
    flips = _flips_from_uniforms(config.channel, stacked)
    rx = keys ^ flips.astype(np.uint8)
    return _TrialSet(truth=truth, rx=rx)


def _match_chunk(rx: np.ndarray, templates: TemplateSet):
    """Argmax template index and best similarity for stacked keys (B, F, d)."""
    B, F, d = rx.shape
    flat = rx.reshape(B * F, d).astype(np.float32)
    tf = templates.keys.astype(np.float32)
    dots = flat @ tf.T
    agree = d - flat.sum(axis=1, keepdims=True) - tf.sum(axis=1) + 2.0 * dots
    sims = (agree / d).reshape(B, F, templates.count)
    best = sims.argmax(axis=2)
    best_sim = np.take_along_axis(sims, best[:, :, None], axis=2)[:, :, 0]
    return best, best_sim


@dataclass
class MatchTrace:
    """Raw per-trial matching data, reusable across thresholds."""

    truth: np.ndarray      # (T, F_out) int
    best: np.ndarray       # (T, F_out) int
    best_sim: np.ndarray   # (T, F_out) float
    rx: np.ndarray | None  # (T, F_out, d) received keys, when retained

    def predictions(self, tau: float) -> np.ndarray:
        return np.where(self.best_sim >= tau, self.best, INSERTED)

    def accuracies(self, tau: float) -> np.ndarray:
        pred = self.predictions(tau)
        return (pred == self.truth).mean(axis=1)

    def flagged_counts(self, tau: float) -> np.ndarray:
        return (self.best_sim < tau).sum(axis=1)


def run_matching(config: SimConfig, keep_rx: bool = False) -> MatchTrace:
    """Run the tamper + channel + matching core for every trial."""
    traces_truth, traces_best, traces_sim, traces_rx = [], [], [], []
    for start in range(0, config.trials, config.chunk_size):
        ids = range(start, min(start + config.chunk_size, config.trials))
        chunk = _build_chunk(config, list(ids))
        best, best_sim = _match_chunk(chunk.rx, config.templates)
        traces_truth.append(chunk.truth)
        traces_best.append(best)
        traces_sim.append(best_sim)
        if keep_rx:
            traces_rx.append(chunk.rx)
    return MatchTrace(
        truth=np.concatenate(traces_truth),
        best=np.concatenate(traces_best),
        best_sim=np.concatenate(traces_sim),
        rx=np.concatenate(traces_rx) if keep_rx else None,
    )


@dataclass
class SimReport:
    """Aggregated outcome of one simulation setting."""

    channel: str
    attack: str
    tau: float
    trials: int
    frames: int
    frames_out: int
    master_seed: int
    mean_accuracy: float
    min_accuracy: float
    std_accuracy: float
    mean_flagged: float
    detection: DetectionReport | None = None
    uncoded_word_accuracy: float | None = None
    coded_word_accuracy: float | None = None
    per_trial_accuracy: np.ndarray | None = None

    def to_dict(self) -> dict:
        d = {
            "channel": self.channel,
            "attack": self.attack,
            "tau": self.tau,
            "trials": self.trials,
            "frames": self.frames,
            "frames_out": self.frames_out,
            "master_seed": self.master_seed,
            "mean_accuracy": self.mean_accuracy,
            "min_accuracy": self.min_accuracy,
            "std_accuracy": self.std_accuracy,
            "mean_flagged": self.mean_flagged,
        }
        if self.detection is not None:
            d["detection"] = self.detection.to_dict()
        if self.uncoded_word_accuracy is not None:
            d["uncoded_word_accuracy"] = self.uncoded_word_accuracy
        if self.coded_word_accuracy is not None:
            d["coded_word_accuracy"] = self.coded_word_accuracy
        return d


def simulate_pipeline(config: SimConfig) -> SimReport:
    """Monte-Carlo study of localization (and optionally payload recovery).

    When `config.code` is set and the templates carry data words, the
    received keys of authentic frames are additionally scored for raw
    (pre-decode) and decoded word recovery.
    """
    want_words = config.code is not None
    trace = run_matching(config, keep_rx=want_words)
    acc = trace.accuracies(config.tau)
    report = SimReport(
        channel=config.channel.name,
        attack=config.attack_label,
        tau=config.tau,
        trials=config.trials,
        frames=config.frames,
        frames_out=config.frames_out,
        master_seed=config.master_seed,
        mean_accuracy=float(acc.mean()),
        min_accuracy=float(acc.min()),
        std_accuracy=float(acc.std()),
        mean_flagged=float(trace.flagged_counts(config.tau).mean()),
        per_trial_accuracy=acc,
    )
    if want_words:
        code = config.code
        tpl = config.templates
        auth = trace.truth != INSERTED
        sent_idx = trace.truth[auth]
        rx = trace.rx[auth]
        sent_words = tpl.data_words[sent_idx]
        sent_keys = tpl.keys[sent_idx]
        bit_acc = float(np.mean(rx == sent_keys))
        total_bits = int(rx.size)
        k = code.k_data
        uncoded = float(np.mean(np.all(rx[:, :k] == sent_words, axis=1)))
        coded_hits = 0
        n_auth = rx.shape[0]
        for start in range(0, n_auth, config.chunk_size):
            sl = slice(start, start + config.chunk_size)
            _, words, _, _ = code.decode_batch(rx[sl])
            coded_hits += int(np.count_nonzero(np.all(words == sent_words[sl], axis=1)))
        report.detection = make_report(total_bits, bit_acc, frames=n_auth)
        report.uncoded_word_accuracy = uncoded
        report.coded_word_accuracy = coded_hits / n_auth
    return report


@dataclass
class SweepResult:
    """Localization accuracy across thresholds, with common random numbers."""

    taus: tuple
    attacks: tuple
    mean_accuracy: np.ndarray      # (attacks, taus)
    per_trial_accuracy: dict       # attack label -> (taus, trials)
    per_trial_flagged: dict        # attack label -> (taus, trials)

    def rows(self) -> list:
        out = []
        for i, att in enumerate(self.attacks):
            for j, tau in enumerate(self.taus):
                out.append({"attack": att, "tau": tau,
                            "mean_accuracy": float(self.mean_accuracy[i, j])})
        return out


def threshold_sweep(config: SimConfig, taus, attacks=None) -> SweepResult:
    """Evaluate localization accuracy over a threshold grid.

    Each attack's trials are simulated once and every threshold is
    applied to the same similarity data, so threshold comparisons are
    free of Monte-Carlo noise between grid points.
    """
    taus = tuple(float(t) for t in taus)
    for t in taus:
        if not 0.0 < t <= 1.0:
            raise ValueError("all taus must be in (0, 1]")
    if attacks is None:
        attacks = [config.tamper]
    labels = []
    means = []
    per_acc = {}
    per_flag = {}
    for attack in attacks:
        cfg = replace(config, tamper=attack)
        trace = run_matching(cfg)
        accs = np.stack([trace.accuracies(t) for t in taus])
        flags = np.stack([trace.flagged_counts(t) for t in taus])
        label = cfg.attack_label
        labels.append(label)
        means.append(accs.mean(axis=1))
        per_acc[label] = accs
        per_flag[label] = flags
    return SweepResult(
        taus=taus,
        attacks=tuple(labels),
        mean_accuracy=np.stack(means),
        per_trial_accuracy=per_acc,
        per_trial_flagged=per_flag,
    )


def word_accuracy_experiment(code: LdpcCode, channel: ChannelModel,
                             trials: int, master_seed: int) -> dict:
    """Word recovery with and without decoding over a noisy channel.

    Random data words are encoded, transmitted, and read back two ways:
    raw systematic prefix (uncoded) and belief-propagation decode. The
    transmitted object is the same in both cases, so the comparison
    isolates the value of the parity bits.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    word_rng = rngmod.substream(master_seed, "words")
    words = word_rng.integers(0, 2, size=(trials, code.k_data), dtype=np.uint8)
    sent = code.encode_batch(words)
    ch_rng = rngmod.substream(master_seed, "channel")
    rx = flip_bits(sent, channel, ch_rng)
    uncoded = float(np.mean(np.all(rx[:, :code.k_data] == words, axis=1)))
    coded_hits = 0
    conv_count = 0
    for start in range(0, trials, 4096):
        sl = slice(start, start + 4096)
        _, got, _, conv = code.decode_batch(rx[sl])
        coded_hits += int(np.count_nonzero(np.all(got == words[sl], axis=1)))
        conv_count += int(np.count_nonzero(conv))
    measured_ber = float(np.mean(rx != sent))
    return {
        "channel": channel.name,
        "trials": trials,
        "master_seed": master_seed,
        "measured_ber": measured_ber,
        "uncoded_word_accuracy": uncoded,
        "coded_word_accuracy": coded_hits / trials,
        "decoder_convergence": conv_count / trials,
    }
