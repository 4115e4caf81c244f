"""Acceptance gate: ten checks, one printed PASS/FAIL line each.

Run with `pytest tests/test_acceptance.py -v -s` to see the lines as
they print. Every tolerance is stated inline; Monte-Carlo checks use
frozen seeds so reruns are exact repeats.
"""

import json
import shutil

import numpy as np
import pytest
from PIL import Image

from framemark import (AttackPlan, BitString, ChannelModel, DistortionSpec,
                       SimConfig, TamperSpec, bit_accuracy, build_ldpc,
                       codeword_templates, corpus_frames, distort, embed_frame,
                       extract_frame, fitted_burst_channel, localize,
                       log_p_value, preset, psnr, simulate_pipeline,
                       synth_frame, threshold_sweep, word_accuracy_experiment)
from framemark.channel import clean_window_probability
from framemark.cli import main
from framemark.localize import apply_combined
from framemark.templates import TemplateSet

import oracles


def _report(num: int, name: str, ok: bool, detail: str):
    print(f"C{num:02d} {'PASS' if ok else 'FAIL'}  {name}: {detail}")
    assert ok, f"criterion {num} failed: {detail}"


def test_criterion_01_log_p_anchors():
    anchors = [((768, 0.950), -166.65), ((624, 0.983), -166.48),
               ((624, 0.933), -123.32)]
    got = [log_p_value(L, a) for (L, a), _ in anchors]
    ok = all(abs(g - want) <= 0.5 for g, ((_, _), want) in zip(got, anchors))
    _report(1, "published log10 P anchors within 0.5",
            ok, "got " + ", ".join(f"{g:.4f}" for g in got))


def test_criterion_02_log_p_oracle_equivalence():
    worst = 0.0
    checked = 0
    for L in range(1, 31):
        for k in range(0, L + 1):
            got = log_p_value(L, k / L)
            want = oracles.log10_binom_tail(L, oracles.matched_floor(L, k / L))
            worst = max(worst, abs(got - want))
            checked += 1
    # spot checks at the published scale, against the same big-int oracle
    for L, acc in ((768, 0.950), (624, 0.983), (624, 0.933), (768, 1.0)):
        got = log_p_value(L, acc)
        want = oracles.log10_binom_tail(L, oracles.matched_floor(L, acc))
        worst = max(worst, abs(got - want))
        checked += 1
    ok = worst <= 1e-9
    _report(2, "log10 P equals exact big-integer tail within 1e-9",
            ok, f"{checked} cases, worst abs diff {worst:.2e}")


def test_criterion_03_ldpc_exhaustive(code7):
    rate_ok = (code7.k_data, code7.n_code) == (16, 48)
    words = np.zeros((1 << 16, 16), dtype=np.uint8)
    ints = np.arange(1 << 16, dtype=np.uint32)
    for b in range(16):
        words[:, b] = (ints >> (15 - b)) & 1
    sent = code7.encode_batch(words)
    clean_ok = True
    for start in range(0, 1 << 16, 8192):
        sl = slice(start, start + 8192)
        _, got, _, _ = code7.decode_batch(sent[sl])
        if not np.array_equal(got, words[sl]):
            clean_ok = False
            break
    one = BitString.from_hex("a5a5", 16)
    cw = code7.encode_batch(one.bits[None, :])[0]
    hits = 0
    for pos in range(48):
        rx = cw.copy()
        rx[pos] ^= 1
        _, got, _, _ = code7.decode_batch(rx[None, :])
        hits += int(np.array_equal(got[0], one.bits))
    ok = rate_ok and clean_ok and hits >= 47
    _report(3, "rate 16/48, exhaustive 2^16 noiseless roundtrip, single-flip repair",
            ok, f"rate {code7.k_data}/{code7.n_code}, clean roundtrip "
                f"{'exact' if clean_ok else 'BROKEN'}, "
                f"single-flip recovered {hits}/48 positions")


def test_criterion_04_word_accuracy_bracket(code7):
    analytic = (1.0 - 0.05) ** 16
    iid = word_accuracy_experiment(code7, ChannelModel("iid", 0.05),
                                   trials=10000, master_seed=404)
    burst_ch = fitted_burst_channel()
    burst = word_accuracy_experiment(code7, burst_ch, trials=10000,
                                     master_seed=405)
    exact_burst = clean_window_probability(burst_ch, 16)
    checks = [
        abs(analytic - 0.440) <= 0.01,
        abs(iid["uncoded_word_accuracy"] - analytic) <= 0.02,
        0.30 <= burst["uncoded_word_accuracy"] <= 0.45,
        0.30 <= exact_burst <= 0.45,
        iid["coded_word_accuracy"] >= 0.95,
        burst["coded_word_accuracy"] >= 0.95,
    ]
    _report(4, "word accuracy: iid 0.44 analytic, burst in [0.30, 0.45], coded >= 0.95",
            all(checks),
            f"analytic {analytic:.4f}, iid uncoded {iid['uncoded_word_accuracy']:.4f} "
            f"coded {iid['coded_word_accuracy']:.4f}; fitted burst "
            f"(mean length {burst_ch.mean_burst_length:g}) uncoded "
            f"{burst['uncoded_word_accuracy']:.4f} (exact {exact_burst:.4f}) "
            f"coded {burst['coded_word_accuracy']:.4f}; 10000 trials each")


def test_criterion_05_matcher_oracle_equivalence():
    rng = np.random.default_rng(202508)
    taus = (0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9)
    trials = 10000
    mismatches = 0
    for _ in range(trials):
        d = int(rng.choice((16, 32, 48)))
        M = int(rng.integers(2, 33))
        N = int(rng.integers(2, 33))
        tpl = TemplateSet(rng.integers(0, 2, (M, d), dtype=np.uint8),
                          seed=0, min_distance=0)
        truth0 = tuple(int(i % M) for i in range(N))
        n_swap = int(rng.integers(0, N // 2 + 1)) if N >= 2 else 0
        n_swap = min(n_swap, 2)
        pool = rng.permutation(N)
        pairs = tuple((int(pool[2 * i]), int(pool[2 * i + 1]))
                      for i in range(n_swap))
        n_drop = int(rng.integers(0, min(3, N - 1) + 1))
        drops = tuple(int(x) for x in rng.choice(N, n_drop, replace=False))
        spec = TamperSpec(swap_pairs=pairs, drop_indices=drops,
                          insert_count=int(rng.integers(0, 4)),
                          seed=int(rng.integers(1 << 30)))
        keys, truth = apply_combined(tpl.keys[np.array(truth0)], truth0, spec)
        ber = float(rng.uniform(0.0, 0.3))
        flips = rng.random(keys.shape) < ber
        rx = keys ^ flips.astype(np.uint8)
        tau = float(rng.choice(taus))
        got = list(localize(tpl, rx, truth, tau=tau).predicted)
        tmasks = [oracles.bits_to_int(r) for r in tpl.keys]
        kmasks = [oracles.bits_to_int(r) for r in rx]
        want = oracles.match_reference(tmasks, kmasks, d, tau)
        mismatches += got != want
    ok = mismatches == 0
    _report(5, "matcher equals independent transcription on random instances",
            ok, f"{trials} instances (N, M <= 32, BER <= 0.3, random tamper), "
                f"{mismatches} mismatches")


def test_criterion_06_localization_calibrated_noise(tpl16):
    plans = (AttackPlan(swaps=1), AttackPlan(drops=1), AttackPlan(inserts=1))
    means = []
    for plan in plans:
        cfg = SimConfig(frames=26, templates=tpl16, channel=preset("clean"),
                        tamper=plan, trials=10000, master_seed=11, tau=0.8)
        means.append(simulate_pipeline(cfg).mean_accuracy)
    overall = float(np.mean(means))
    ok = overall >= 0.90 and all(m >= 0.90 for m in means)
    _report(6, "clean-preset localization accuracy >= 0.90 at tau 0.8",
            ok, f"swap {means[0]:.4f}, drop {means[1]:.4f}, insert {means[2]:.4f}, "
                f"overall {overall:.4f} over 10000 trials per attack")


def test_criterion_07_threshold_trends(tpl16):
    taus = (0.7, 0.75, 0.8, 0.85, 0.9)
    cfg = SimConfig(frames=26, templates=tpl16, channel=preset("clean"),
                    tamper=None, trials=10000, master_seed=13, tau=0.8)
    sweep = threshold_sweep(cfg, taus, attacks=[
        AttackPlan(swaps=1), AttackPlan(drops=1), AttackPlan(inserts=1),
        AttackPlan(swaps=1, drops=1, inserts=1)])
    acc = sweep.mean_accuracy
    swap_ok = bool(np.all(np.diff(acc[0]) <= 0))
    drop_ok = bool(np.all(np.diff(acc[1]) <= 0))
    peaks = []
    falls = []
    for row in (acc[2], acc[3]):
        peak = int(np.argmax(row))
        peaks.append(taus[peak] <= 0.85)
        falls.append(row[-1] < row[peak])
    ok = swap_ok and drop_ok and all(peaks) and all(falls)
    fmt = lambda row: "[" + ", ".join(f"{v:.5f}" for v in row) + "]"
    _report(7, "threshold study: swap/drop non-increasing, insert/combined "
               "peak <= 0.85 then fall at 0.9",
            ok, f"taus {taus}, swap {fmt(acc[0])}, drop {fmt(acc[1])}, "
                f"insert {fmt(acc[2])}, combined {fmt(acc[3])}; "
                f"common random numbers across taus")


def test_criterion_08_aggressive_attack_trends(tpl16):
    ch = preset("gaussian_noise")

    def means(plans):
        out = []
        for plan in plans:
            cfg = SimConfig(frames=26, templates=tpl16, channel=ch,
                            tamper=plan, trials=10000, master_seed=17, tau=0.8)
            out.append(simulate_pipeline(cfg).mean_accuracy)
        return np.array(out)

    swap_m = means([AttackPlan(swaps=s) for s in range(1, 9)])
    drop_m = means([AttackPlan(drops=d) for d in range(1, 11)])
    ins_m = means([AttackPlan(inserts=i) for i in range(1, 11)])
    swap_ok = float(swap_m.max() - swap_m.min()) < 0.05
    drop_ok = float(drop_m.max() - drop_m.min()) < 0.05
    ins_ok = bool(np.all(np.diff(ins_m) >= 0))
    ok = swap_ok and drop_ok and ins_ok
    _report(8, "attack scaling: swap/drop accuracy flat within 0.05, "
               "insert accuracy non-decreasing 1 to 10",
            ok, f"swap spread {swap_m.max() - swap_m.min():.4f}, "
                f"drop spread {drop_m.max() - drop_m.min():.4f}, "
                f"insert means {ins_m[0]:.4f} -> {ins_m[-1]:.4f} "
                f"({'monotone' if ins_ok else 'NOT monotone'}), "
                f"noisy preset, 10000 trials per setting")


def test_criterion_09_embedder_pipeline(corpus8, embed_params):
    payload = BitString.random(48, np.random.default_rng(90))
    marked = [embed_frame(f, payload, embed_params) for f in corpus8]
    clean_accs = [bit_accuracy(np.asarray(payload.bits),
                               np.asarray(extract_frame(m, embed_params).bits))
                  for m in marked]
    psnrs = [psnr(f, m) for f, m in zip(corpus8, marked)]
    jpeg = distort(marked, DistortionSpec("jpeg", 50))
    jpeg_accs = [bit_accuracy(np.asarray(payload.bits),
                              np.asarray(extract_frame(m, embed_params).bits))
                 for m in jpeg]
    hits = 0
    total = 0
    for i in range(400):
        frame = synth_frame(9000 + i, size=128)
        got = extract_frame(frame, embed_params)
        hits += int(np.count_nonzero(np.asarray(got.bits)
                                     == np.asarray(payload.bits)))
        total += 48
    chance = hits / total
    checks = [
        min(clean_accs) == 1.0,
        min(psnrs) >= 40.0,
        float(np.mean(jpeg_accs)) >= 0.70,
        0.48 <= chance <= 0.52,
    ]
    _report(9, "embedder: exact clean roundtrip, PSNR >= 40, jpeg-q50 >= 0.70, "
               "unmarked frames at chance",
            all(checks),
            f"clean min {min(clean_accs):.4f} over {len(corpus8)} frames at 512, "
            f"PSNR min {min(psnrs):.2f} dB, jpeg mean {np.mean(jpeg_accs):.4f}, "
            f"unmarked accuracy {chance:.4f} over 400 frames")


def test_criterion_10_cli_determinism(tmp_path):
    frames_dir = tmp_path / "frames"
    frames_dir.mkdir()
    for i, f in enumerate(corpus_frames(3, 256, seed=4)):
        Image.fromarray(f, mode="RGB").save(frames_dir / f"in_{i:02d}.png")
    sim_cfg = tmp_path / "sim.json"
    sim_cfg.write_text(json.dumps({"frames": 8, "trials": 64, "master_seed": 3,
                                   "channels": ["clean", "jpeg"],
                                   "attacks": ["none", {"inserts": 1}],
                                   "words": True, "templates": {"M": 8}}))

    def run():
        # identical arguments both times: same paths, same seeds
        base = tmp_path / "work"
        base.mkdir()
        man = base / "manifest.json"
        marked = base / "marked"
        outputs = {}
        assert main(["keygen", "--seed", "77", "--templates", "8",
                     "--out", str(man)]) == 0
        assert main(["embed", "--manifest", str(man), "--frames",
                     str(frames_dir), "--out-dir", str(marked)]) == 0
        assert main(["verify", "--manifest", str(man), "--frames", str(marked),
                     "--out", str(base / "verify.json")]) == 0
        assert main(["localize", "--manifest", str(man), "--frames",
                     str(marked), "--tau-sweep", "0.7:0.9:0.05",
                     "--format", "csv", "--out", str(base / "sweep.csv")]) == 0
        assert main(["simulate", "--config", str(sim_cfg), "--format", "csv",
                     "--out", str(base / "sim.csv")]) == 0
        assert main(["bench", "--manifest", str(man), "--synthetic", "2",
                     "--size", "256", "--distortions", "jpeg,saturation",
                     "--format", "csv", "--out", str(base / "bench.csv")]) == 0
        outputs["manifest"] = man.read_bytes()
        outputs["embed_log"] = (marked / "embed_log.json").read_bytes()
        for p in sorted(marked.glob("*.png")):
            outputs[p.name] = p.read_bytes()
        for name in ("verify.json", "sweep.csv", "sim.csv", "bench.csv"):
            outputs[name] = (base / name).read_bytes()
        return outputs

    first = run()
    shutil.rmtree(tmp_path / "work")
    second = run()
    same = [k for k in first if first[k] == second[k]]
    diff = [k for k in first if first[k] != second[k]]
    ok = not diff and len(first) == len(second)
    _report(10, "full CLI pipeline rerun is byte-identical",
            ok, f"{len(same)} artifacts compared "
                f"(manifest, frames, logs, verify/localize/simulate/bench)"
                + (f"; DIFFERING: {diff}" if diff else ""))
