"""JSON run configuration: model dims, rates, optimizer settings, sampler,
and corpus parameters.

Model hyperparameters travel in the config file; command-line flags carry
only paths and run-scoped knobs, so experiments stay diffable.  Unknown keys
are rejected, not ignored.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import CorpusConfig
from .errors import ConfigError
from .hifb import HifbConfig
from .pipeline import SamplerConfig, Stage2Config
from .vqvae import Stage1Config

_DEFAULTS: dict = {
    "seed": 0,
    "dims": {
        "d": 32,
        "latent_dim": 32,
        "codebook_size": 256,
        "n_f": 8,
        "layers": 2,
        "heads": 4,
        "d_id": 32,
        "d_m": 32,
        "d_e": 32,
        "pair_band": None,
    },
    "rates": {
        "feature_hz": 50,
        "fps": 25,
    },
    "stage1": {
        "lr": 1e-4,
        "weight_decay": 1e-2,
        "betas": [0.9, 0.95],
        "beta": 0.25,
        "batch_size": 8,
        "max_epochs": 60,
        "patience": 5,
        "max_steps": None,
    },
    "stage2": {
        "lr": 1e-5,
        "weight_decay": 0.0,
        "betas": [0.9, 0.95],
        "velocity_weight": 0.1,
        "commit_weight": 0.1,
        "quantize_mode": "none",
        "batch_size": 8,
        "max_epochs": 60,
        "patience": 5,
        "max_steps": None,
    },
    "sampler": {
        "temperature": 1.0,
        "n_samples": 10,
        "seed": 0,
    },
    "corpus": {
        "n_subjects": 10,
        "sentences_per_cell": 4,
        "neutral_sentences": 6,
        "t_min": 50,
        "t_max": 150,
        "d_art": 4,
        "vertices": 45,
        "split_ratios": [0.8, 0.1, 0.1],
        "fdd_mode": "abs",
    },
}


def default_config() -> dict:
    return json.loads(json.dumps(_DEFAULTS))


def _reject_unknown(given: dict, allowed: dict, path: str) -> None:
    for key in given:
        if key not in allowed:
            raise ConfigError(f"unknown config key {path + key!r}")
        if isinstance(allowed[key], dict) and allowed[key]:
            if not isinstance(given[key], dict):
                raise ConfigError(f"config key {path + key!r} must be an object")
            _reject_unknown(given[key], allowed[key], f"{path}{key}.")


def _merge(defaults: dict, given: dict) -> dict:
    out = {}
    for key, base in defaults.items():
        if key in given and isinstance(base, dict):
            out[key] = _merge(base, given[key])
        elif key in given:
            out[key] = given[key]
        else:
            out[key] = base
    return out


@dataclass
class RunConfig:
    raw: dict = field(default_factory=default_config)

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    def validate(self) -> None:
        dims = self.raw["dims"]
        rates = self.raw["rates"]
        if dims["d"] % dims["heads"] != 0:
            raise ConfigError(f"dims.d={dims['d']} not divisible by dims.heads={dims['heads']}")
        if dims["latent_dim"] % dims["heads"] != 0:
            raise ConfigError("dims.latent_dim must be divisible by dims.heads")
        if dims["codebook_size"] < 2:
            raise ConfigError("dims.codebook_size must be >= 2")
        if rates["feature_hz"] % rates["fps"] != 0:
            raise ConfigError(
                f"rates.feature_hz={rates['feature_hz']} not divisible by rates.fps={rates['fps']}"
            )
        for stage in ("stage1", "stage2"):
            if self.raw[stage]["lr"] <= 0:
                raise ConfigError(f"{stage}.lr must be positive")
        if self.raw["sampler"]["temperature"] < 0:
            raise ConfigError("sampler.temperature must be >= 0")
        if self.raw["corpus"]["vertices"] < 12:
            raise ConfigError("corpus.vertices must be >= 12")
        if self.raw["corpus"]["fdd_mode"] not in ("abs", "signed"):
            raise ConfigError("corpus.fdd_mode must be 'abs' or 'signed'")
        self.hifb_config().validate()
        self.corpus_config().validate()

    def hifb_config(self) -> HifbConfig:
        dims = self.raw["dims"]
        band = dims["pair_band"]
        return HifbConfig(
            layers=int(dims["layers"]),
            heads=int(dims["heads"]),
            d=int(dims["d"]),
            n_f=int(dims["n_f"]),
            pair_band=None if band is None else int(band),
        )

    def stage1_config(self) -> Stage1Config:
        s = self.raw["stage1"]
        dims = self.raw["dims"]
        return Stage1Config(
            latent_dim=int(dims["latent_dim"]),
            codebook_size=int(dims["codebook_size"]),
            heads=int(dims["heads"]),
            lr=float(s["lr"]),
            weight_decay=float(s["weight_decay"]),
            betas=tuple(float(b) for b in s["betas"]),
            beta=float(s["beta"]),
            batch_size=int(s["batch_size"]),
            max_epochs=int(s["max_epochs"]),
            patience=None if s["patience"] is None else int(s["patience"]),
            max_steps=None if s["max_steps"] is None else int(s["max_steps"]),
            seed=self.seed,
        )

    def stage2_config(self) -> Stage2Config:
        s = self.raw["stage2"]
        dims = self.raw["dims"]
        return Stage2Config(
            d=int(dims["d"]),
            d_id=int(dims["d_id"]),
            latent_dim=int(dims["latent_dim"]),
            heads=int(dims["heads"]),
            hifb=self.hifb_config(),
            fps=int(self.raw["rates"]["fps"]),
            lr=float(s["lr"]),
            weight_decay=float(s["weight_decay"]),
            betas=tuple(float(b) for b in s["betas"]),
            velocity_weight=float(s["velocity_weight"]),
            commit_weight=float(s["commit_weight"]),
            quantize_mode=str(s["quantize_mode"]),
            batch_size=int(s["batch_size"]),
            max_epochs=int(s["max_epochs"]),
            patience=None if s["patience"] is None else int(s["patience"]),
            max_steps=None if s["max_steps"] is None else int(s["max_steps"]),
            seed=self.seed,
        )

    def sampler_config(self) -> SamplerConfig:
        s = self.raw["sampler"]
        return SamplerConfig(
            temperature=float(s["temperature"]),
            n_samples=int(s["n_samples"]),
            seed=int(s["seed"]),
        )

    def corpus_config(self) -> CorpusConfig:
        c = self.raw["corpus"]
        return CorpusConfig(
            n_subjects=int(c["n_subjects"]),
            sentences_per_cell=int(c["sentences_per_cell"]),
            neutral_sentences=int(c["neutral_sentences"]),
            t_min=int(c["t_min"]),
            t_max=int(c["t_max"]),
            d_art=int(c["d_art"]),
            d_m=int(self.raw["dims"]["d_m"]),
            d_e=int(self.raw["dims"]["d_e"]),
            fps=int(self.raw["rates"]["fps"]),
            feature_hz=int(self.raw["rates"]["feature_hz"]),
            split_ratios=tuple(float(r) for r in c["split_ratios"]),
        )

    @property
    def n_vertices(self) -> int:
        return int(self.raw["corpus"]["vertices"])

    @property
    def fdd_mode(self) -> str:
        return str(self.raw["corpus"]["fdd_mode"])


def load_config(path) -> RunConfig:
    """Parse, merge over defaults, reject unknown keys, and validate."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        given = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(given, dict):
        raise ConfigError(f"{path}: top-level config must be a JSON object")
    _reject_unknown(given, _DEFAULTS, "")
    cfg = RunConfig(raw=_merge(_DEFAULTS, given))
    cfg.validate()
    return cfg


def config_from_dict(given: dict) -> RunConfig:
    _reject_unknown(given, _DEFAULTS, "")
    cfg = RunConfig(raw=_merge(_DEFAULTS, given))
    cfg.validate()
    return cfg
