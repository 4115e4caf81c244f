"""Reference distortion suite and robustness benchmarking.

Eleven distortions cover geometric, photometric, compression, and noise
attacks at fixed reference strengths. Video compression requires an
external ffmpeg-style encoder named by the FRAMEMARK_ENCODER environment
variable; when unset, that distortion reports as skipped rather than
failing the whole bench.
"""

from __future__ import annotations

import io
import os
import subprocess
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, ImageEnhance

from .bits import BitString
from .stats import DetectionReport, aggregate, report_from_bits
from .watermark import EmbedParams, check_frame, embed_frame, extract_frame, psnr

ENCODER_ENV = "FRAMEMARK_ENCODER"

GEOMETRIC = ("resize", "crop", "rotation25", "rotation90")
PHOTOMETRIC = ("brightness", "contrast", "saturation", "sharpness")

_KINDS = GEOMETRIC + PHOTOMETRIC + ("jpeg", "gaussian_noise", "mpeg4")


class EncoderNotConfigured(RuntimeError):
    """The mpeg4 distortion needs an external encoder that is not set up."""


@dataclass(frozen=True)
class DistortionSpec:
    """One distortion kind plus its strength parameter."""

    kind: str
    param: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown distortion {self.kind!r}; "
                             f"known kinds: {', '.join(sorted(_KINDS))}")
        p = self.param
        if self.kind in ("resize", "crop"):
            if p is None or not 0.0 < p <= 1.0:
                raise ValueError(f"{self.kind} needs a scale factor in (0, 1]")
        elif self.kind == "jpeg":
            if p is None or not 1 <= p <= 100:
                raise ValueError("jpeg needs a quality in [1, 100]")
        elif self.kind == "rotation25":
            if p is None or not 0.0 < p < 90.0:
                raise ValueError("rotation25 needs an angle in (0, 90) degrees")
        elif self.kind in PHOTOMETRIC:
            if p is None or p <= 0.0:
                raise ValueError(f"{self.kind} needs a positive factor")
        elif self.kind == "gaussian_noise":
            if p is None or not 0.0 <= p <= 1.0:
                raise ValueError("gaussian_noise needs a sigma in [0, 1] "
                                 "(relative to full scale)")
        elif self.kind == "mpeg4":
            if p is not None and not 1 <= p <= 31:
                raise ValueError("mpeg4 quantizer scale must be in [1, 31]")

    @property
    def label(self) -> str:
        if self.kind == "jpeg":
            return f"jpeg_q{int(self.param)}"
        if self.kind in ("resize", "crop"):
            return f"{self.kind}_{self.param:g}"
        if self.kind == "rotation25":
            return f"rotation_{self.param:g}deg"
        if self.kind in PHOTOMETRIC:
            return f"{self.kind}_{self.param:g}x"
        if self.kind == "gaussian_noise":
            return f"gaussian_noise_{self.param:g}"
        if self.kind == "mpeg4":
            q = 5 if self.param is None else int(self.param)
            return f"mpeg4_q{q}"
        return self.kind


# Reference strengths for the standard suite.
DISTORTION_SUITE = (
    DistortionSpec("resize", 0.7),
    DistortionSpec("jpeg", 50),
    DistortionSpec("crop", 0.7),
    DistortionSpec("rotation25", 25.0),
    DistortionSpec("rotation90"),
    DistortionSpec("brightness", 2.0),
    DistortionSpec("contrast", 2.0),
    DistortionSpec("saturation", 2.0),
    DistortionSpec("sharpness", 2.0),
    DistortionSpec("gaussian_noise", 0.1),
    DistortionSpec("mpeg4"),
)


def _pil(frame: np.ndarray) -> Image.Image:
    return Image.fromarray(frame, mode="RGB")


def _arr(img: Image.Image) -> np.ndarray:
    return np.asarray(img.convert("RGB"), dtype=np.uint8).copy()


def _distort_one(frame: np.ndarray, spec: DistortionSpec, index: int) -> np.ndarray:
    h, w = frame.shape[:2]
    k = spec.kind
    if k == "resize":
        nw, nh = max(1, round(w * spec.param)), max(1, round(h * spec.param))
        return _arr(_pil(frame).resize((nw, nh), Image.BILINEAR))
    if k == "jpeg":
        buf = io.BytesIO()
        _pil(frame).save(buf, format="JPEG", quality=int(spec.param))
        buf.seek(0)
        return _arr(Image.open(buf))
    if k == "crop":
        ch, cw = max(1, round(h * spec.param)), max(1, round(w * spec.param))
        y0, x0 = (h - ch) // 2, (w - cw) // 2
        return frame[y0:y0 + ch, x0:x0 + cw].copy()
    if k == "rotation25":
        return _arr(_pil(frame).rotate(spec.param, resample=Image.BILINEAR,
                                       fillcolor=(0, 0, 0)))
    if k == "rotation90":
        return np.rot90(frame, k=1, axes=(0, 1)).copy()
    if k == "brightness":
        return _arr(ImageEnhance.Brightness(_pil(frame)).enhance(spec.param))
    if k == "contrast":
        return _arr(ImageEnhance.Contrast(_pil(frame)).enhance(spec.param))
    if k == "saturation":
        return _arr(ImageEnhance.Color(_pil(frame)).enhance(spec.param))
    if k == "sharpness":
        return _arr(ImageEnhance.Sharpness(_pil(frame)).enhance(spec.param))
    if k == "gaussian_noise":
        rng = np.random.default_rng(np.random.SeedSequence([int(spec.seed), index]))
        noisy = frame.astype(np.float64) / 255.0 + rng.normal(0.0, spec.param,
                                                              size=frame.shape)
        return np.clip(np.round(noisy * 255.0), 0, 255).astype(np.uint8)
    raise AssertionError(f"unhandled kind {k}")  # mpeg4 handled at clip level


def distort(frames, spec: DistortionSpec) -> list:
    """Apply one distortion to a list of frames (dimensions may change)."""
    frames = [check_frame(f) for f in frames]
    if spec.kind == "mpeg4":
        return _mpeg4_roundtrip(frames, spec)
    return [_distort_one(f, spec, i) for i, f in enumerate(frames)]


def normalize_geometry(frames, shape_hw) -> list:
    """Resize frames back to (H, W) when a distortion changed dimensions.

    This is deliberately naive (bilinear stretch, no registration): the
    point is to give the extractor a well-defined grid, not to undo the
    attack. Rotations keep their dimensions and stay rotated.
    """
    h, w = shape_hw
    out = []
    for f in frames:
        if f.shape[:2] == (h, w):
            out.append(f)
        else:
            out.append(_arr(_pil(f).resize((w, h), Image.BILINEAR)))
    return out


def _mpeg4_roundtrip(frames, spec: DistortionSpec) -> list:
    encoder = os.environ.get(ENCODER_ENV, "").strip()
    if not encoder:
        raise EncoderNotConfigured(
            f"mpeg4 distortion needs an external encoder; set {ENCODER_ENV} "
            f"to an ffmpeg-style binary")
    qscale = 5 if spec.param is None else int(spec.param)
    with tempfile.TemporaryDirectory(prefix="framemark_mpeg4_") as td:
        src = Path(td) / "src"
        dst = Path(td) / "dst"
        src.mkdir()
        dst.mkdir()
        for i, f in enumerate(frames):
            _pil(f).save(src / f"{i:05d}.png")
        video = Path(td) / "clip.mp4"
        common = [encoder, "-y", "-loglevel", "error"]
        try:
            subprocess.run(common + ["-framerate", "12", "-i", str(src / "%05d.png"),
                                     "-c:v", "mpeg4", "-qscale:v", str(qscale),
                                     str(video)], check=True, capture_output=True)
            subprocess.run(common + ["-i", str(video), str(dst / "%05d.png")],
                           check=True, capture_output=True)
        except FileNotFoundError as exc:
            raise EncoderNotConfigured(
                f"encoder {encoder!r} not found; fix {ENCODER_ENV}") from exc
        except subprocess.CalledProcessError as exc:
            tail = (exc.stderr or b"").decode(errors="replace")[-400:]
            raise RuntimeError(f"encoder failed (exit {exc.returncode}): {tail}")
        out_files = sorted(dst.glob("*.png"))
        if len(out_files) != len(frames):
            raise RuntimeError(
                f"encoder returned {len(out_files)} frames for {len(frames)} inputs")
        return [_arr(Image.open(p)) for p in out_files]


@dataclass
class BenchReport:
    """Robustness of the embedder across the distortion suite."""

    psnr_mean: float
    psnr_min: float
    frames: int
    rows: list = field(default_factory=list)

    def row(self, label: str) -> dict:
        for r in self.rows:
            if r["distortion"] == label:
                return r
        raise KeyError(label)

    def to_dict(self) -> dict:
        return {
            "frames": self.frames,
            "psnr_mean": self.psnr_mean,
            "psnr_min": self.psnr_min,
            "rows": self.rows,
        }


def run_robustness_bench(frames, payloads, params: EmbedParams = EmbedParams(),
                         distortions=DISTORTION_SUITE, code=None) -> BenchReport:
    """Embed, distort, extract, and report accuracy per distortion.

    `payloads` is one bit string per frame. Geometry-changing
    distortions are stretched back to the embedding dimensions before
    extraction (see normalize_geometry). A distortion whose external
    tool is unavailable yields a row with status "skipped".
    """
    frames = [check_frame(f) for f in frames]
    payloads = [BitString(p) if not isinstance(p, BitString) else p for p in payloads]
    if len(payloads) != len(frames):
        raise ValueError(f"{len(frames)} frames but {len(payloads)} payloads")
    marked = [embed_frame(f, p, params) for f, p in zip(frames, payloads)]
    psnrs = [psnr(f, m) for f, m in zip(frames, marked)]
    report = BenchReport(psnr_mean=float(np.mean(psnrs)),
                         psnr_min=float(np.min(psnrs)),
                         frames=len(frames))
    for spec in distortions:
        row = {"distortion": spec.label, "kind": spec.kind, "status": "ok"}
        try:
            hit = distort(marked, spec)
        except EncoderNotConfigured as exc:
            row["status"] = "skipped"
            row["reason"] = str(exc)
            report.rows.append(row)
            continue
        restored = normalize_geometry(hit, frames[0].shape[:2])
        per_frame = []
        word_pairs = []
        for orig, frame, payload in zip(frames, restored, payloads):
            got = extract_frame(frame, params)
            per_frame.append(report_from_bits(payload, got))
            if code is not None:
                from .ldpc import ldpc_decode
                word_pairs.append((BitString(payload.bits[:code.k_data]),
                                   ldpc_decode(code, got)))
        pooled = aggregate(per_frame)
        row["bit_accuracy"] = pooled.bit_accuracy
        row["log10_p"] = pooled.log10_p
        if word_pairs:
            from .stats import word_accuracy
            row["word_accuracy"] = word_accuracy(word_pairs)
        report.rows.append(row)
    return report
