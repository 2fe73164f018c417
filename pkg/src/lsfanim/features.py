"""Feature providers for the three input streams.

Real speech feature extractors live behind this interface; the synthetic
providers here project a track's latents through fixed seeded random maps and
add small seeded noise.  Each provider is a pure function of (track, seed):
the motion provider reads only the articulation latent and the emotion
provider only the emotion latent, so the streams stay disjoint by
construction.  Identity comes from the neutral shape through a small MLP,
never from audio.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np

from ._binio import check_magic, read_f32_block, read_u32, read_u8, write_f32_block, write_u32, write_u8
from .blocks import init_mlp, mlp_forward
from .errors import ConfigError, InputError, IntegrityError
from .params import ParamStore, init_rng
from .flame import NeutralShape
from .tensor import Tensor

if TYPE_CHECKING:
    from .corpus import AudioTrackLatent

FEATURE_RATE_HZ = 50
STREAM_TAGS = ("motion", "emotion")

LSFF_MAGIC = b"LSFF"
LSFF_VERSION = 1

IDENTITY_HIDDEN = 128


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from heterogeneous parts (strings, ints, arrays)."""
    h = hashlib.sha256()
    for part in parts:
        if isinstance(part, str):
            h.update(b"s" + part.encode("utf-8"))
        elif isinstance(part, (int, np.integer)):
            h.update(b"i" + int(part).to_bytes(16, "little", signed=True))
        elif isinstance(part, (float, np.floating)):
            h.update(b"f" + np.float64(part).tobytes())
        elif isinstance(part, np.ndarray):
            h.update(b"a" + np.ascontiguousarray(part).tobytes())
        else:
            raise ConfigError(f"cannot derive seed from {type(part).__name__}")
        h.update(b"|")
    return int.from_bytes(h.digest()[:8], "little") >> 1


@dataclass
class FeatureSequence:
    """Frame-level feature matrix with its source sample rate."""

    rate_hz: int
    data: np.ndarray          # (T, d) float32
    stream_tag: str

    def __post_init__(self):
        if self.rate_hz <= 0:
            raise InputError(f"feature rate must be positive, got {self.rate_hz}")
        if self.stream_tag not in STREAM_TAGS:
            raise InputError(f"stream_tag must be one of {STREAM_TAGS}, got {self.stream_tag!r}")
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 2:
            raise InputError(f"feature data must be 2-D, got shape {self.data.shape}")
        if not np.isfinite(self.data).all():
            raise InputError("feature data contains non-finite values")

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


def _random_map(seed_parts, d_in: int, d_out: int) -> np.ndarray:
    rng = init_rng(derive_seed(*seed_parts))
    return (rng.standard_normal((d_in, d_out)) / np.sqrt(d_in)).astype(np.float32)


def emotion_features(track: "AudioTrackLatent", seed: int, d_e: int = 32) -> FeatureSequence:
    """Project the track's emotion latent to a 50 Hz frame sequence.

    The signal is the (mix * intensity, intensity) vector through a random map
    fixed by the seed alone; per-frame noise is an order of magnitude smaller
    than the signal scale and depends only on the emotion latent and length.
    """
    t = track.n_frames
    latent = np.concatenate([track.emotion_mix * track.intensity, [track.intensity]]).astype(np.float32)
    w = _random_map(("emotion-map", seed), latent.size, d_e)
    signal = latent @ w
    noise_rng = init_rng(derive_seed("emotion-noise", seed, latent, t))
    noise = 0.02 * noise_rng.standard_normal((t, d_e)).astype(np.float32)
    data = signal[None, :] + noise
    return FeatureSequence(rate_hz=FEATURE_RATE_HZ, data=data, stream_tag="emotion")


def motion_features(track: "AudioTrackLatent", seed: int, d_m: int = 32) -> FeatureSequence:
    """Project the track's articulation latent to a 50 Hz frame sequence."""
    art = np.asarray(track.articulation, dtype=np.float32)
    w = _random_map(("motion-map", seed), art.shape[1], d_m)
    noise_rng = init_rng(derive_seed("motion-noise", seed, art))
    noise = 0.02 * noise_rng.standard_normal((art.shape[0], d_m)).astype(np.float32)
    data = art @ w + noise
    return FeatureSequence(rate_hz=FEATURE_RATE_HZ, data=data, stream_tag="motion")


def align_to_fps(f: FeatureSequence, fps: int) -> FeatureSequence:
    """Downsample by non-overlapping window averaging from rate_hz to fps.

    The rate must divide evenly; a trailing partial window is dropped.
    """
    if fps <= 0 or f.rate_hz % fps != 0:
        raise ConfigError(f"feature rate {f.rate_hz} Hz not divisible by target fps {fps}")
    factor = f.rate_hz // fps
    if factor == 1:
        return FeatureSequence(rate_hz=fps, data=f.data.copy(), stream_tag=f.stream_tag)
    t_out = f.n_frames // factor
    trimmed = f.data[: t_out * factor]
    data = trimmed.reshape(t_out, factor, f.dim).mean(axis=1).astype(np.float32)
    return FeatureSequence(rate_hz=fps, data=data, stream_tag=f.stream_tag)


def init_identity_encoder(store: ParamStore, d_id: int, rng: np.random.Generator) -> None:
    """Two-layer MLP 300 -> 128 -> d_id with ReLU between."""
    from .flame import N_SHAPE

    init_mlp(store, "fid", [N_SHAPE, IDENTITY_HIDDEN, d_id], rng)


def identity_encode(store: ParamStore, shape: NeutralShape) -> Tensor:
    """Neutral shape params to a (1, d_id) identity embedding; differentiable."""
    if "fid.fc0.w" not in store:
        from .errors import StateError

        raise StateError("identity encoder parameters not registered (fid.*)")
    x = Tensor(shape.params.reshape(1, -1).astype(store.dtype))
    return mlp_forward(store, "fid", x, n_layers=2)


def write_features(path, f: FeatureSequence) -> None:
    with open(path, "wb") as fh:
        fh.write(LSFF_MAGIC)
        write_u32(fh, LSFF_VERSION)
        write_u32(fh, f.rate_hz)
        write_u8(fh, STREAM_TAGS.index(f.stream_tag))
        write_u32(fh, f.n_frames)
        write_u32(fh, f.dim)
        write_f32_block(fh, f.data)


def read_features(path) -> FeatureSequence:
    path = Path(path)
    with open(path, "rb") as fh:
        check_magic(fh, LSFF_MAGIC, path)
        version = read_u32(fh, "version")
        if version != LSFF_VERSION:
            raise IntegrityError(f"{path}: unsupported LSFF version {version}")
        rate = read_u32(fh, "rate")
        tag_code = read_u8(fh, "stream tag")
        if tag_code >= len(STREAM_TAGS):
            raise IntegrityError(f"{path}: unknown stream tag code {tag_code}")
        t = read_u32(fh, "frame count")
        d = read_u32(fh, "feature dim")
        data = read_f32_block(fh, t * d, "feature data").reshape(t, d)
    return FeatureSequence(rate_hz=rate, data=data, stream_tag=STREAM_TAGS[tag_code])
