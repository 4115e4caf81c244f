import numpy as np
import pytest

from framemark import (AttackPlan, ChannelModel, SimConfig, TamperSpec,
                       burst_channel, clean_window_probability, fit_burst_length,
                       fitted_burst_channel, flip_bits, preset, preset_names,
                       simulate_pipeline, threshold_sweep,
                       word_accuracy_experiment)
from framemark.bits import BitString
from framemark.channel import run_matching
from framemark.localize import INSERTED
from framemark.rng import substream

import oracles


def test_preset_rates():
    assert preset("clean").ber == pytest.approx(0.017)
    assert preset("resize").ber == pytest.approx(0.321)
    assert preset("jpeg").ber == pytest.approx(0.277)
    assert preset("crop").ber == pytest.approx(0.03)
    assert preset("rotation25").ber == pytest.approx(0.37)
    assert preset("gaussian_noise").ber == pytest.approx(0.118)
    assert preset("mpeg4").ber == pytest.approx(0.277)
    # measured accuracy below chance clamps to a 0.5 flip rate
    assert preset("rotation90").ber == 0.5
    assert len(preset_names()) == 12
    for name in preset_names():
        assert preset(name).is_burst is False


def test_preset_unknown_name_lists_choices():
    with pytest.raises(ValueError, match="jpeg"):
        preset("vhs")


def test_channel_model_validation():
    with pytest.raises(ValueError):
        ChannelModel("bad", 0.6)
    with pytest.raises(ValueError):
        ChannelModel("bad", -0.1)
    with pytest.raises(ValueError):
        ChannelModel("bad", 0.05, p_good_to_bad=0.1)  # partial burst params
    with pytest.raises(ValueError, match="inconsistent"):
        ChannelModel("bad", 0.3, p_good_to_bad=0.1, p_bad_to_good=0.9,
                     ber_bad=1.0)


def test_burst_channel_properties():
    ch = burst_channel(0.05, 4.0, ber_bad=0.8)
    assert ch.is_burst
    assert ch.mean_burst_length == pytest.approx(4.0)
    assert ch.stationary_bad * ch.ber_bad == pytest.approx(0.05)
    with pytest.raises(ValueError):
        burst_channel(0.05, 0.5)
    with pytest.raises(ValueError):
        burst_channel(0.5, 2.0, ber_bad=0.4)  # marginal above ber_bad


def test_iid_flip_rate_empirical():
    ch = ChannelModel("iid", 0.05)
    bits = np.zeros((1000, 1000), dtype=np.uint8)
    out = flip_bits(bits, ch, np.random.default_rng(5))
    rate = out.mean()
    assert abs(rate - 0.05) < 0.001


def test_burst_marginal_rate_empirical():
    ch = burst_channel(0.05, 3.0, ber_bad=1.0)
    bits = np.zeros((10000, 1000), dtype=np.uint8)
    out = flip_bits(bits, ch, np.random.default_rng(6))
    rate = out.mean()
    assert abs(rate - 0.05) / 0.05 < 0.005


def test_burst_run_lengths_follow_mean():
    # flips arrive in runs whose mean length tracks the bad-state dwell time
    ch = burst_channel(0.02, 6.0, ber_bad=1.0)
    bits = np.zeros((2000, 2000), dtype=np.uint8)
    out = flip_bits(bits, ch, np.random.default_rng(7))
    runs = []
    for row in out:
        padded = np.concatenate([[0], row, [0]])
        d = np.diff(padded)
        starts = np.flatnonzero(d == 1)
        ends = np.flatnonzero(d == -1)
        runs.extend(ends - starts)
    assert abs(np.mean(runs) - 6.0) < 0.15


def test_clean_window_probability_iid():
    ch = ChannelModel("iid", 0.05)
    assert clean_window_probability(ch, 16) == pytest.approx(0.95 ** 16)


@pytest.mark.parametrize("length,ber_bad", [(1.0, 1.0), (2.5, 1.0),
                                            (4.0, 0.7), (8.0, 1.0)])
def test_clean_window_probability_matches_oracle(length, ber_bad):
    ch = burst_channel(0.05, length, ber_bad=ber_bad)
    for w in (1, 2, 5, 16, 48):
        got = clean_window_probability(ch, w)
        want = oracles.ge_clean_window(
            ch.p_good_to_bad, ch.p_bad_to_good, ch.ber_bad, w)
        assert got == pytest.approx(want, abs=1e-12)


def test_clean_window_probability_empirical():
    ch = burst_channel(0.05, 4.0, ber_bad=1.0)
    bits = np.zeros((200000, 16), dtype=np.uint8)
    out = flip_bits(bits, ch, np.random.default_rng(8))
    frac = np.mean(~out.any(axis=1))
    assert frac == pytest.approx(clean_window_probability(ch, 16), abs=0.005)


def test_fit_burst_length_scan():
    ch = fit_burst_length(0.05, 0.30, 0.45)
    p = clean_window_probability(ch, 16)
    assert 0.30 <= p <= 0.45
    # a shorter mean burst length would miss the bracket
    if ch.mean_burst_length > 1.0:
        shorter = burst_channel(0.05, ch.mean_burst_length - 0.25)
        assert not 0.30 <= clean_window_probability(shorter, 16) <= 0.45
    with pytest.raises(ValueError, match="no mean burst length"):
        fit_burst_length(0.4, 0.90, 0.95)
    with pytest.raises(ValueError):
        fit_burst_length(0.05, 0.45, 0.30)


def test_fitted_burst_channel_bracket():
    ch = fitted_burst_channel()
    assert ch.ber == pytest.approx(0.05)
    p16 = clean_window_probability(ch, 16)
    assert 0.30 <= p16 <= 0.45
    assert p16 == pytest.approx(0.4222, abs=5e-4)


def test_flip_bits_bitstring_and_shapes():
    ch = ChannelModel("heavy", 0.5)
    bs = BitString.from_hex("a5a5", 16)
    out = flip_bits(bs, ch, np.random.default_rng(1))
    assert isinstance(out, BitString) and len(out) == 16
    arr = flip_bits(np.zeros(16, dtype=np.uint8), ch, np.random.default_rng(1))
    assert arr.shape == (16,)
    # same rng position, same draws
    assert BitString(arr ^ bs.bits) == out
    with pytest.raises(ValueError):
        flip_bits(np.zeros((2, 2, 2), dtype=np.uint8), ch,
                  np.random.default_rng(0))


def test_zero_rate_channel_is_identity():
    ch = ChannelModel("off", 0.0)
    bits = np.random.default_rng(3).integers(0, 2, (50, 48), dtype=np.uint8)
    assert np.array_equal(flip_bits(bits, ch, np.random.default_rng(0)), bits)


# ----------------------------------------------------------------------
# Word accuracy


def test_word_accuracy_experiment_iid(code7):
    res = word_accuracy_experiment(code7, ChannelModel("iid", 0.05),
                                   trials=3000, master_seed=101)
    assert abs(res["measured_ber"] - 0.05) < 0.002
    assert abs(res["uncoded_word_accuracy"] - 0.95 ** 16) < 0.03
    assert res["coded_word_accuracy"] >= 0.95
    assert res["coded_word_accuracy"] >= res["uncoded_word_accuracy"]
    assert 0.0 <= res["decoder_convergence"] <= 1.0


def test_word_accuracy_uncoded_matches_analytic(code7):
    ch = preset("clean")
    res = word_accuracy_experiment(code7, ch, trials=4000, master_seed=55)
    want = oracles.iid_word_accuracy(ch.ber, 16)
    assert abs(res["uncoded_word_accuracy"] - want) < 0.025


def test_word_accuracy_deterministic(code7):
    a = word_accuracy_experiment(code7, preset("clean"), trials=500,
                                 master_seed=77)
    b = word_accuracy_experiment(code7, preset("clean"), trials=500,
                                 master_seed=77)
    assert a == b


@pytest.mark.parametrize("name", ["clean", "gaussian_noise"])
def test_coded_beats_uncoded_on_decodable_presets(code7, name):
    res = word_accuracy_experiment(code7, preset(name), trials=1500,
                                   master_seed=31)
    assert res["coded_word_accuracy"] >= res["uncoded_word_accuracy"]


# ----------------------------------------------------------------------
# Pipeline simulation


def _base_config(tpl, **kw):
    defaults = dict(frames=26, templates=tpl, channel=preset("clean"),
                    tamper=AttackPlan(swaps=1, drops=1, inserts=1),
                    trials=64, master_seed=5, tau=0.8)
    defaults.update(kw)
    return SimConfig(**defaults)


def test_sim_config_validation(tpl16):
    with pytest.raises(ValueError):
        _base_config(tpl16, frames=0)
    with pytest.raises(ValueError):
        _base_config(tpl16, tau=1.5)
    with pytest.raises(ValueError):
        _base_config(tpl16, frames=4, tamper=AttackPlan(swaps=3))
    with pytest.raises(ValueError):
        _base_config(tpl16, frames=4, tamper=AttackPlan(drops=4))
    with pytest.raises(ValueError):
        AttackPlan(swaps=-1)


def test_sim_config_frames_out(tpl16):
    cfg = _base_config(tpl16, tamper=AttackPlan(drops=2, inserts=3))
    assert cfg.frames_out == 27
    spec = TamperSpec(drop_indices=(0, 1), insert_count=1)
    cfg = _base_config(tpl16, tamper=spec)
    assert cfg.frames_out == 25
    assert cfg.attack_label == "spec_swap0_drop2_ins1"
    assert _base_config(tpl16, tamper=None).attack_label == "none"


def test_simulate_deterministic(tpl16):
    a = simulate_pipeline(_base_config(tpl16))
    b = simulate_pipeline(_base_config(tpl16))
    assert a.mean_accuracy == b.mean_accuracy
    assert a.std_accuracy == b.std_accuracy
    assert np.array_equal(a.per_trial_accuracy, b.per_trial_accuracy)


def test_simulate_chunk_invariance(tpl16):
    a = simulate_pipeline(_base_config(tpl16, chunk_size=2048))
    b = simulate_pipeline(_base_config(tpl16, chunk_size=7))
    assert np.array_equal(a.per_trial_accuracy, b.per_trial_accuracy)
    assert a.to_dict() == b.to_dict()


def test_simulate_clean_channel_no_attack_is_perfect(tpl16):
    cfg = _base_config(tpl16, channel=ChannelModel("off", 0.0), tamper=None,
                       trials=16)
    rep = simulate_pipeline(cfg)
    assert rep.mean_accuracy == 1.0
    assert rep.min_accuracy == 1.0
    assert rep.mean_flagged == 0.0


def test_simulate_fixed_tamper_matches_direct_call(tpl16):
    from framemark.localize import apply_combined, localize

    spec = TamperSpec(swap_pairs=((0, 3),), drop_indices=(5,), insert_count=2,
                      seed=9)
    cfg = _base_config(tpl16, channel=ChannelModel("off", 0.0), tamper=spec,
                       trials=4)
    trace = run_matching(cfg, keep_rx=True)
    truth0 = tuple(i % tpl16.count for i in range(26))
    keys, truth = apply_combined(tpl16.keys[np.array(truth0)], truth0, spec)
    for t in range(4):
        assert tuple(trace.truth[t]) == truth
        assert np.array_equal(trace.rx[t], keys)
        res = localize(tpl16, trace.rx[t], truth, tau=0.8)
        assert res.accuracy == 1.0


def test_simulate_word_accounting(tpl16, code7):
    cfg = _base_config(tpl16, code=code7, trials=48)
    rep = simulate_pipeline(cfg)
    assert rep.detection is not None
    auth = 26 - 1  # one drop, inserts are not authentic
    assert rep.detection.frames == auth * 48
    assert rep.detection.total_bits == auth * 48 * 48
    assert 0.9 <= rep.detection.bit_accuracy <= 1.0
    assert rep.coded_word_accuracy >= rep.uncoded_word_accuracy


def test_simulate_word_accounting_needs_data_words(raw_tpl16, code7):
    with pytest.raises(ValueError, match="data_words"):
        _base_config(raw_tpl16, code=code7)


def test_threshold_sweep_crn_and_monotone_flags(tpl16):
    cfg = _base_config(tpl16, trials=96)
    taus = (0.6, 0.7, 0.8, 0.9)
    sweep = threshold_sweep(cfg, taus,
                            attacks=[AttackPlan(), AttackPlan(swaps=2),
                                     AttackPlan(inserts=2)])
    assert sweep.attacks == ("none", "swap2_drop0_ins0", "swap0_drop0_ins2")
    assert sweep.mean_accuracy.shape == (3, 4)
    for label in sweep.attacks:
        flags = sweep.per_trial_flagged[label]
        # raising tau can only flag more frames, per trial
        assert np.all(np.diff(flags, axis=0) >= 0)
    # CRN: the tau used by simulate_pipeline reproduces the same accuracies
    rep = simulate_pipeline(_base_config(tpl16, trials=96,
                                         tamper=AttackPlan(swaps=2)))
    row = sweep.per_trial_accuracy["swap2_drop0_ins0"][taus.index(0.8)]
    assert np.array_equal(row, rep.per_trial_accuracy)
    with pytest.raises(ValueError):
        threshold_sweep(cfg, (0.0, 0.5))


def test_insert_detection_needs_moderate_tau(tpl16):
    # inserted random keys are only flagged when tau is high enough to
    # reject their best accidental match
    cfg = _base_config(tpl16, channel=ChannelModel("off", 0.0),
                       tamper=AttackPlan(inserts=4), trials=128)
    sweep = threshold_sweep(cfg, (0.55, 0.8))
    label = sweep.attacks[0]
    low = sweep.mean_accuracy[0, 0]
    high = sweep.mean_accuracy[0, 1]
    assert high > low
    assert high == 1.0  # tau 0.8 rejects every random 48-bit key here


def test_attack_plan_insert_truth_layout(tpl16):
    cfg = _base_config(tpl16, tamper=AttackPlan(inserts=3), trials=8)
    trace = run_matching(cfg)
    assert trace.truth.shape == (8, 29)
    assert np.all((trace.truth == INSERTED).sum(axis=1) == 3)
