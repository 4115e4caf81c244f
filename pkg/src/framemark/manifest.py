"""Persistent verification context shared by embedder and verifier.

A manifest carries everything needed to reproduce a deployment: the
master seed, the code geometry, the template keys (and their data words
when the keys are codewords), embedding parameters, and the matching
threshold. Serialization is canonical JSON so reruns are byte-identical
and digests are stable.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from . import rng as rngmod
from .ldpc import LdpcCode, build_ldpc
from .templates import TemplateSet, codeword_templates, generate_templates
from .watermark import EmbedParams

MANIFEST_VERSION = "1"


@dataclass
class Manifest:
    """Key material and parameters for one watermarking deployment."""

    seed: int
    code: LdpcCode
    templates: TemplateSet
    embed: EmbedParams
    tau: float = 0.8
    keys_are_codewords: bool = True
    version: str = MANIFEST_VERSION

    def __post_init__(self):
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must be in (0, 1]")
        if self.keys_are_codewords:
            if self.templates.key_bits != self.code.n_code:
                raise ValueError(
                    f"codeword keys must have n_code={self.code.n_code} bits, "
                    f"got {self.templates.key_bits}")
            synd = (self.templates.keys.astype(np.int64)
                    @ self.code.parity_matrix.T.astype(np.int64)) & 1
            if np.any(synd):
                raise ValueError("template keys fail the parity checks of the "
                                 "declared code")
            if self.templates.data_words is None:
                raise ValueError("codeword templates must carry their data words")

    def to_dict(self) -> dict:
        t = self.templates
        d = {
            "version": self.version,
            "seed": self.seed,
            "k_data": self.code.k_data,
            "n_code": self.code.n_code,
            "code_seed": self.code.seed,
            "M": t.count,
            "d": t.key_bits,
            "min_distance": t.min_distance,
            "template_seed": t.seed,
            "keys": [k for k in (_hex_rows(t.keys))],
            "keys_are_codewords": self.keys_are_codewords,
            "embed": self.embed.to_dict(),
            "tau": self.tau,
        }
        if t.data_words is not None:
            d["data_words"] = _hex_rows(t.data_words)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_json())

    @classmethod
    def from_dict(cls, d: dict) -> "Manifest":
        version = str(d.get("version", ""))
        if version != MANIFEST_VERSION:
            raise ValueError(f"unsupported manifest version {version!r} "
                             f"(expected {MANIFEST_VERSION!r})")
        for key in ("seed", "k_data", "n_code", "code_seed", "M", "d",
                    "min_distance", "template_seed", "keys", "embed", "tau"):
            if key not in d:
                raise ValueError(f"manifest missing field {key!r}")
        code = build_ldpc(int(d["code_seed"]), int(d["k_data"]), int(d["n_code"]))
        from .bits import BitString
        keys = np.stack([BitString.from_hex(h, int(d["d"])).bits for h in d["keys"]])
        if keys.shape[0] != int(d["M"]):
            raise ValueError(f"manifest lists M={d['M']} but {keys.shape[0]} keys")
        words = None
        if d.get("data_words"):
            words = np.stack([BitString.from_hex(h, int(d["k_data"])).bits
                              for h in d["data_words"]])
        templates = TemplateSet(keys, seed=int(d["template_seed"]),
                                min_distance=int(d["min_distance"]),
                                data_words=words)
        return cls(
            seed=int(d["seed"]),
            code=code,
            templates=templates,
            embed=EmbedParams.from_dict(d["embed"]),
            tau=float(d["tau"]),
            keys_are_codewords=bool(d.get("keys_are_codewords", False)),
        )

    @classmethod
    def load(cls, path) -> "Manifest":
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValueError(f"manifest {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(data)


def _hex_rows(rows: np.ndarray) -> list:
    from .bits import BitString
    return [BitString(r).to_hex() for r in rows]


def build_manifest(seed: int, template_count: int = 16, key_bits: int = 48,
                   min_distance: int | None = None,
                   embed: EmbedParams | None = None, tau: float = 0.8,
                   codeword_keys: bool = True,
                   k_data: int = 16) -> Manifest:
    """Derive a full manifest from one master seed.

    Subsystem seeds come from labeled hashes of the master seed, so the
    code, the templates, and the embedding patterns use independent
    streams. With codeword_keys (the default), key_bits must equal the
    code length and each template key protects a random data word.
    """
    code_seed = rngmod.derive_seed(seed, "code")
    template_seed = rngmod.derive_seed(seed, "templates")
    if codeword_keys:
        code = build_ldpc(code_seed, k_data=k_data, n_code=key_bits)
        templates = codeword_templates(code, count=template_count,
                                       seed=template_seed,
                                       min_distance=min_distance)
    else:
        # Raw keys: the code still exists (standard geometry) but the
        # template keys are unconstrained random strings.
        code = build_ldpc(code_seed)
        templates = generate_templates(count=template_count, key_bits=key_bits,
                                       seed=template_seed,
                                       min_distance=min_distance)
    if embed is None:
        embed = EmbedParams(payload_bits=key_bits,
                            pattern_seed=rngmod.derive_seed(seed, "patterns"))
    return Manifest(seed=int(seed), code=code, templates=templates, embed=embed,
                    tau=tau, keys_are_codewords=codeword_keys)
