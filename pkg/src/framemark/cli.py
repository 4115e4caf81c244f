"""Command-line interface.

Verbs: keygen, embed, extract, verify, localize, simulate, bench.
Primary outputs are canonical JSON (or a CSV projection) and contain no
timestamps, so identical inputs give byte-identical files. Timing and
progress go to stderr only.

Exit codes: 0 success (verify: mark detected; localize: no tamper),
1 negative outcome (mark absent / tampering found), 2 errors.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np
from PIL import Image

from . import rng as rngmod
from .bits import BitString
from .channel import (AttackPlan, ChannelModel, SimConfig, burst_channel, preset,
                      simulate_pipeline, threshold_sweep)
from .distortions import DISTORTION_SUITE, DistortionSpec, run_robustness_bench
from .corpus import corpus_frames
from .ldpc import ldpc_decode
from .localize import diagnose, localize, validate_truth
from .manifest import Manifest, build_manifest
from .reporting import canonical_json, rows_to_csv, write_text
from .stats import aggregate, report_from_bits
from .watermark import EmbedParams, check_frame, embed_frame, extract_frame, psnr

FRAME_GLOB = ("*.png", "*.jpg", "*.jpeg", "*.bmp")
DEFAULT_LOGP_THRESHOLD = -6.0


class CommandError(Exception):
    """User-facing failure: message to stderr, exit 2."""


def _read_frames(directory) -> list:
    d = Path(directory)
    if not d.is_dir():
        raise CommandError(f"frame directory {d} does not exist")
    files = sorted(p for pat in FRAME_GLOB for p in d.glob(pat))
    if not files:
        raise CommandError(f"no frames found in {d} (looked for {', '.join(FRAME_GLOB)})")
    frames = []
    for p in files:
        try:
            frames.append(np.asarray(Image.open(p).convert("RGB"), dtype=np.uint8))
        except OSError as exc:
            raise CommandError(f"could not read frame {p}: {exc}")
    return frames


def _write_frames(frames, directory):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for i, f in enumerate(frames):
        Image.fromarray(f, mode="RGB").save(d / f"frame_{i:05d}.png")


def _read_payload_words(path, k_data: int) -> list:
    """One payload word per line, as k/4 hex digits; blanks and # comments ok."""
    digits = k_data // 4
    if k_data % 4:
        raise CommandError(f"payload files need k_data divisible by 4, got {k_data}")
    words = []
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise CommandError(f"could not read payload file {path}: {exc}")
    for ln, line in enumerate(lines, start=1):
        s = line.split("#", 1)[0].strip().lower()
        if not s:
            continue
        if len(s) != digits or any(c not in "0123456789abcdef" for c in s):
            raise CommandError(
                f"{path}:{ln}: expected {digits} hex digits per word, got {line.strip()!r}")
        words.append(BitString.from_hex(s, k_data))
    if not words:
        raise CommandError(f"payload file {path} contains no words")
    return words


def _load_manifest(args) -> Manifest:
    if not getattr(args, "manifest", None):
        raise CommandError("this command needs --manifest")
    try:
        return Manifest.load(args.manifest)
    except FileNotFoundError:
        raise CommandError(f"manifest {args.manifest} does not exist")
    except ValueError as exc:
        raise CommandError(f"bad manifest {args.manifest}: {exc}")


def _expected_payloads(man: Manifest, frames_n: int, payload_file) -> tuple:
    """(per-frame 48-bit payloads, per-frame data words or None)."""
    if payload_file:
        words = _read_payload_words(payload_file, man.code.k_data)
        if len(words) != frames_n:
            raise CommandError(
                f"payload file has {len(words)} words but {frames_n} frames")
        payloads = [BitString(man.code.encode_batch(w.bits[None, :])[0]) for w in words]
        return tuple(payloads), tuple(words)
    tpl = man.templates
    idx = [i % tpl.count for i in range(frames_n)]
    payloads = tuple(tpl.key(j) for j in idx)
    words = None
    if tpl.data_words is not None:
        words = tuple(BitString(tpl.data_words[j]) for j in idx)
    return payloads, words


def _emit(args, data_rows, json_obj):
    """Write the primary output in the requested format."""
    fmt = getattr(args, "format", "json") or "json"
    out = getattr(args, "out", None) or "-"
    if fmt == "csv":
        if data_rows is None:
            raise CommandError("this command has no CSV projection")
        write_text(out, rows_to_csv(data_rows))
    else:
        write_text(out, canonical_json(json_obj))


# ----------------------------------------------------------------------
# Commands


def cmd_keygen(args) -> int:
    man = build_manifest(
        seed=args.seed,
        template_count=args.templates,
        key_bits=args.key_bits,
        min_distance=args.min_distance,
        tau=args.tau,
        codeword_keys=not args.raw_keys,
        embed=None if args.alpha is None else EmbedParams(
            payload_bits=args.key_bits, alpha=args.alpha,
            pattern_seed=rngmod.derive_seed(args.seed, "patterns")),
    )
    out = args.out or "manifest.json"
    man.save(out)
    print(f"[framemark] wrote {out} (digest {man.digest()[:16]})", file=sys.stderr)
    return 0


def cmd_embed(args) -> int:
    man = _load_manifest(args)
    frames = _read_frames(args.frames)
    payloads, words = _expected_payloads(man, len(frames), args.payloads)
    marked = []
    psnrs = []
    for f, p in zip(frames, payloads):
        try:
            m = embed_frame(f, p, man.embed)
        except ValueError as exc:
            raise CommandError(str(exc))
        marked.append(m)
        psnrs.append(psnr(f, m))
    _write_frames(marked, args.out_dir)
    log = {
        "command": "embed",
        "manifest_digest": man.digest(),
        "frames": len(frames),
        "assignment": [i % man.templates.count for i in range(len(frames))]
        if not args.payloads else None,
        "payload_words": [w.to_hex() for w in words] if words else None,
        "psnr": [round(v, 4) for v in psnrs],
        "psnr_mean": round(float(np.mean(psnrs)), 4),
        "psnr_min": round(float(np.min(psnrs)), 4),
        "out_dir": str(args.out_dir),
    }
    log_path = args.log or str(Path(args.out_dir) / "embed_log.json")
    write_text(log_path, canonical_json(log))
    return 0


def _extract_keys(man: Manifest, frames) -> list:
    keys = []
    for f in frames:
        try:
            keys.append(extract_frame(check_frame(f), man.embed))
        except ValueError as exc:
            raise CommandError(str(exc))
    return keys


def cmd_extract(args) -> int:
    man = _load_manifest(args)
    frames = _read_frames(args.frames)
    keys = _extract_keys(man, frames)
    obj = {
        "command": "extract",
        "manifest_digest": man.digest(),
        "frames": len(frames),
        "d": man.templates.key_bits,
        "keys": [k.to_hex() for k in keys],
    }
    if man.keys_are_codewords:
        decoded = [ldpc_decode(man.code, k) for k in keys]
        obj["decoded_words"] = [r.word.to_hex() for r in decoded]
        obj["decoder_converged"] = [r.converged for r in decoded]
    _emit(args, None, obj)
    return 0


def cmd_verify(args) -> int:
    man = _load_manifest(args)
    frames = _read_frames(args.frames)
    keys = _extract_keys(man, frames)
    payloads, words = _expected_payloads(man, len(frames), args.payloads)
    per_frame = []
    word_pairs = []
    for key, payload, i in zip(keys, payloads, range(len(keys))):
        per_frame.append(report_from_bits(payload, key))
        if words is not None:
            word_pairs.append((words[i], ldpc_decode(man.code, key)))
    pooled = aggregate(per_frame)
    detected = pooled.log10_p <= args.logp_threshold
    obj = {
        "command": "verify",
        "manifest_digest": man.digest(),
        "frames": len(frames),
        "pooled": pooled.to_dict(),
        "per_frame": [r.to_dict() for r in per_frame],
        "logp_threshold": args.logp_threshold,
        "detected": bool(detected),
    }
    if word_pairs:
        from .stats import word_accuracy
        obj["word_accuracy"] = word_accuracy(word_pairs)
    rows = [{"frame": i, **r.to_dict()} for i, r in enumerate(per_frame)]
    _emit(args, rows, obj)
    return 0 if detected else 1


def _parse_sweep(text: str) -> tuple:
    try:
        a, b, step = (float(x) for x in text.split(":"))
    except ValueError:
        raise CommandError(f"--tau-sweep expects start:stop:step, got {text!r}")
    if step <= 0 or not 0.0 < a <= b <= 1.0:
        raise CommandError(f"bad sweep range {text!r}")
    taus = np.round(np.arange(a, b + step / 2, step), 6)
    return tuple(float(t) for t in taus)


def cmd_localize(args) -> int:
    man = _load_manifest(args)
    if bool(args.frames) == bool(args.keys):
        raise CommandError("localize needs exactly one of --frames or --keys")
    if args.frames:
        keys = np.stack([k.bits for k in _extract_keys(man, _read_frames(args.frames))])
    else:
        try:
            data = json.loads(Path(args.keys).read_text())
        except OSError as exc:
            raise CommandError(f"could not read keys file {args.keys}: {exc}")
        except json.JSONDecodeError as exc:
            raise CommandError(f"keys file {args.keys} is not valid JSON: {exc}")
        if not isinstance(data, dict) or "keys" not in data:
            raise CommandError(f"keys file {args.keys} must be JSON with a 'keys' list")
        d = int(data.get("d", man.templates.key_bits))
        keys = np.stack([BitString.from_hex(h, d).bits for h in data["keys"]])
    n = keys.shape[0]
    if args.truth:
        try:
            truth = json.loads(Path(args.truth).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise CommandError(f"could not read truth file {args.truth}: {exc}")
        truth = validate_truth(truth, man.templates.count)
        if len(truth) != n:
            raise CommandError(f"truth lists {len(truth)} frames but keys have {n}")
    else:
        truth = tuple(i % man.templates.count for i in range(n))
    tau = args.tau if args.tau is not None else man.tau
    if args.tau_sweep:
        taus = _parse_sweep(args.tau_sweep)
        rows = []
        for t in taus:
            res = localize(man.templates, keys, truth, tau=t)
            flagged = sum(1 for p in res.predicted if p == -1)
            rows.append({"tau": t, "accuracy": res.accuracy, "flagged": flagged})
        obj = {"command": "localize", "manifest_digest": man.digest(),
               "sweep": rows}
        _emit(args, rows, obj)
        return 0
    try:
        result = localize(man.templates, keys, truth, tau=tau)
    except ValueError as exc:
        raise CommandError(str(exc))
    expected_n = args.expected_frames or n
    expected = tuple(i % man.templates.count for i in range(expected_n))
    events = diagnose(result.predicted, expected)
    obj = {
        "command": "localize",
        "manifest_digest": man.digest(),
        "result": result.to_dict(),
        "events": events.to_dict(),
        "tampered": events.any,
    }
    rows = [{"frame": i, "predicted": p, "similarity": round(s, 6), "truth": t}
            for i, (p, s, t) in enumerate(zip(result.predicted,
                                              result.similarities, truth))]
    _emit(args, rows, obj)
    return 1 if events.any else 0


def _config_channel(entry) -> ChannelModel:
    if isinstance(entry, str):
        try:
            return preset(entry)
        except ValueError as exc:
            raise CommandError(str(exc))
    if not isinstance(entry, dict):
        raise CommandError(f"channel entries must be preset names or objects, "
                           f"got {entry!r}")
    if "burst" in entry:
        b = entry["burst"]
        try:
            return burst_channel(b["marginal_ber"], b["mean_burst_length"],
                                 b.get("ber_bad", 1.0),
                                 name=entry.get("name"))
        except (KeyError, TypeError, ValueError) as exc:
            raise CommandError(f"bad burst channel spec {b!r}: {exc}")
    if "ber" in entry:
        try:
            return ChannelModel(name=entry.get("name", f"iid_{entry['ber']:g}"),
                                ber=float(entry["ber"]))
        except (TypeError, ValueError) as exc:
            raise CommandError(f"bad channel spec {entry!r}: {exc}")
    raise CommandError(f"channel object needs 'ber' or 'burst': {entry!r}")


def _config_attack(entry):
    if entry in ("none", None):
        return None
    if not isinstance(entry, dict):
        raise CommandError(f"attack entries must be 'none' or objects, got {entry!r}")
    unknown = set(entry) - {"swaps", "drops", "inserts"}
    if unknown:
        raise CommandError(f"unknown attack fields: {', '.join(sorted(unknown))}")
    try:
        return AttackPlan(swaps=int(entry.get("swaps", 0)),
                          drops=int(entry.get("drops", 0)),
                          inserts=int(entry.get("inserts", 0)))
    except (TypeError, ValueError) as exc:
        raise CommandError(f"bad attack spec {entry!r}: {exc}")


_SIM_FIELDS = {"frames", "trials", "master_seed", "tau", "taus", "channels",
               "attacks", "templates", "words"}


def cmd_simulate(args) -> int:
    try:
        cfg = json.loads(Path(args.config).read_text())
    except OSError as exc:
        raise CommandError(f"could not read config {args.config}: {exc}")
    except json.JSONDecodeError as exc:
        raise CommandError(f"config {args.config} is not valid JSON: {exc}")
    if not isinstance(cfg, dict):
        raise CommandError("config must be a JSON object")
    unknown = set(cfg) - _SIM_FIELDS
    if unknown:
        raise CommandError(f"unknown config fields: {', '.join(sorted(unknown))}; "
                           f"valid fields: {', '.join(sorted(_SIM_FIELDS))}")
    for req in ("frames", "trials"):
        if req not in cfg:
            raise CommandError(f"config missing required field {req!r}")
    try:
        frames = int(cfg["frames"])
        trials = int(cfg["trials"])
        master_seed = int(cfg.get("master_seed", args.seed))
        tau = float(cfg.get("tau", 0.8))
    except (TypeError, ValueError) as exc:
        raise CommandError(f"bad config value: {exc}")
    taus = cfg.get("taus")
    if taus is not None:
        if (not isinstance(taus, list) or not taus
                or not all(isinstance(t, (int, float)) for t in taus)):
            raise CommandError("config field 'taus' must be a non-empty number list")
        taus = tuple(float(t) for t in taus)
    channels = cfg.get("channels", ["clean"])
    if not isinstance(channels, list) or not channels:
        raise CommandError("config field 'channels' must be a non-empty list")
    channels = [_config_channel(c) for c in channels]
    attacks = cfg.get("attacks", ["none"])
    if not isinstance(attacks, list) or not attacks:
        raise CommandError("config field 'attacks' must be a non-empty list")
    attacks = [_config_attack(a) for a in attacks]
    tcfg = cfg.get("templates", {})
    if not isinstance(tcfg, dict):
        raise CommandError("config field 'templates' must be an object")
    t_unknown = set(tcfg) - {"M", "key_bits", "min_distance", "seed"}
    if t_unknown:
        raise CommandError(f"unknown template fields: {', '.join(sorted(t_unknown))}")
    want_words = bool(cfg.get("words", False))

    from .ldpc import build_ldpc
    from .templates import codeword_templates
    code = build_ldpc(rngmod.derive_seed(master_seed, "code"))
    try:
        tpl = codeword_templates(
            code,
            count=int(tcfg.get("M", 16)),
            seed=int(tcfg.get("seed", rngmod.derive_seed(master_seed, "templates"))),
            min_distance=tcfg.get("min_distance"),
        )
    except ValueError as exc:
        raise CommandError(f"bad template config: {exc}")

    rows = []
    for ch in channels:
        for attack in attacks:
            try:
                sim = SimConfig(frames=frames, templates=tpl, channel=ch,
                                tamper=attack, trials=trials,
                                master_seed=master_seed, tau=tau,
                                code=code if want_words else None)
            except ValueError as exc:
                raise CommandError(f"bad simulation setting: {exc}")
            if taus:
                sweep = threshold_sweep(sim, taus)
                for r in sweep.rows():
                    rows.append({"channel": ch.name, **r, "trials": trials})
            else:
                rep = simulate_pipeline(sim)
                row = {"channel": ch.name, "attack": rep.attack, "tau": tau,
                       "trials": trials, "mean_accuracy": rep.mean_accuracy,
                       "min_accuracy": rep.min_accuracy,
                       "mean_flagged": rep.mean_flagged}
                if rep.uncoded_word_accuracy is not None:
                    row["uncoded_word_accuracy"] = rep.uncoded_word_accuracy
                    row["coded_word_accuracy"] = rep.coded_word_accuracy
                    row["bit_accuracy"] = rep.detection.bit_accuracy
                rows.append(row)
    obj = {"command": "simulate", "master_seed": master_seed,
           "frames": frames, "trials": trials, "rows": rows}
    _emit(args, rows, obj)
    return 0


def cmd_bench(args) -> int:
    man = _load_manifest(args)
    if args.frames:
        frames = _read_frames(args.frames)
    else:
        frames = corpus_frames(count=args.synthetic, size=args.size,
                               seed=man.seed)
    payloads, _ = _expected_payloads(man, len(frames), None)
    if args.distortions == "all":
        suite = DISTORTION_SUITE
    else:
        wanted = [s.strip() for s in args.distortions.split(",") if s.strip()]
        by_kind = {s.kind: s for s in DISTORTION_SUITE}
        missing = [wn for wn in wanted if wn not in by_kind]
        if missing:
            raise CommandError(
                f"unknown distortions: {', '.join(missing)}; "
                f"known: {', '.join(s.kind for s in DISTORTION_SUITE)}")
        suite = tuple(by_kind[wn] for wn in wanted)
    code = man.code if man.keys_are_codewords else None
    report = run_robustness_bench(frames, payloads, man.embed, suite, code=code)
    obj = {"command": "bench", "manifest_digest": man.digest(),
           **report.to_dict()}
    _emit(args, report.rows, obj)
    return 0


# ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="framemark",
        description="Frame watermark coding, verification, localization, "
                    "and channel simulation.")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output path ('-' for stdout)")
    common.add_argument("--format", choices=("json", "csv"), default="json",
                        help="primary output format (default json)")
    common.add_argument("--threads", type=int, default=1,
                        help="reserved; computations are vectorized in-process")

    p = sub.add_parser("keygen", parents=[common],
                       help="derive a manifest (code, templates, patterns) from a seed")
    p.add_argument("--seed", type=int, required=True, help="master seed")
    p.add_argument("--templates", type=int, default=16, help="template count M")
    p.add_argument("--key-bits", type=int, default=48, help="key length d")
    p.add_argument("--min-distance", type=int, default=None,
                   help="pairwise Hamming floor (default d//3)")
    p.add_argument("--tau", type=float, default=0.8, help="matching threshold")
    p.add_argument("--alpha", type=float, default=None, help="embedding strength")
    p.add_argument("--raw-keys", action="store_true",
                   help="random keys instead of codeword keys")
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("embed", parents=[common],
                       help="embed per-frame keys (or explicit payload words)")
    p.add_argument("--manifest", required=True)
    p.add_argument("--frames", required=True, help="input frame directory")
    p.add_argument("--out-dir", required=True, help="watermarked frame directory")
    p.add_argument("--payloads", help="payload word file (one hex word per line)")
    p.add_argument("--log", help="embed log path (default <out-dir>/embed_log.json)")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("extract", parents=[common],
                       help="extract per-frame keys to JSON")
    p.add_argument("--manifest", required=True)
    p.add_argument("--frames", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("verify", parents=[common],
                       help="score extracted bits against expected payloads")
    p.add_argument("--manifest", required=True)
    p.add_argument("--frames", required=True)
    p.add_argument("--payloads", help="expected payload word file")
    p.add_argument("--logp-threshold", type=float, default=DEFAULT_LOGP_THRESHOLD,
                   help=f"detection threshold on log10 p (default {DEFAULT_LOGP_THRESHOLD})")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("localize", parents=[common],
                       help="match frames to templates and diagnose edits")
    p.add_argument("--manifest", required=True)
    p.add_argument("--frames", help="frame directory to extract keys from")
    p.add_argument("--keys", help="extracted-keys JSON (from the extract verb)")
    p.add_argument("--truth", help="ground-truth index JSON list (-1 = inserted)")
    p.add_argument("--tau", type=float, default=None,
                   help="matching threshold (default: manifest tau)")
    p.add_argument("--tau-sweep", help="threshold grid start:stop:step")
    p.add_argument("--expected-frames", type=int, default=None,
                   help="original frame count for diagnosis (default: observed)")
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser("simulate", parents=[common],
                       help="Monte-Carlo pipeline study from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=0,
                   help="master seed fallback when the config has none")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", parents=[common],
                       help="embedder robustness across the distortion suite")
    p.add_argument("--manifest", required=True)
    p.add_argument("--frames", help="frame directory (default: synthetic corpus)")
    p.add_argument("--synthetic", type=int, default=8,
                   help="synthetic frame count when no --frames")
    p.add_argument("--size", type=int, default=512, help="synthetic frame size")
    p.add_argument("--distortions", default="all",
                   help="comma-separated kinds, or 'all'")
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    t0 = time.monotonic()
    try:
        rc = args.func(args)
    except CommandError as exc:
        print(f"framemark: error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"framemark: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"framemark: error: {exc}", file=sys.stderr)
        return 2
    print(f"[framemark] {args.command} finished in {time.monotonic() - t0:.2f}s",
          file=sys.stderr)
    return rc


if __name__ == "__main__":
    sys.exit(main())
