"""Deterministic synthetic corpus with a learnable cross-modal structure.

Each item couples an audio-track latent (a smooth low-dim articulation time
series plus a static 8-way emotion mixture with a scalar intensity) to a
ground-truth motion sequence built from it: the articulation drives
expression channels 0..19 and jaw channel 50 (the mouth group), the emotion
drives low-frequency offsets on channels 20..49 (the upper-face group) scaled
by intensity, and a fixed random linear map of the subject's shape params
adds a small constant per-subject bias.  Emotion therefore moves the upper
face and articulation the mouth by construction, which is what makes
upper-face dynamics comparisons between fusion architectures meaningful at
this scale.

Splits are subject-level: every subject id lands in exactly one of
train/val/test.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, InputError, IntegrityError
from .features import FeatureSequence, derive_seed, emotion_features, motion_features, read_features, write_features
from .flame import N_SHAPE, NeutralShape, read_shape, write_shape
from .params import init_rng
from .vqvae import MotionSequence, read_motion, write_motion

N_EMOTIONS = 8
INTENSITY_LEVELS = {1: 0.33, 2: 0.66, 3: 1.0}
MOUTH_EXPR_CHANNELS = slice(0, 20)
UPPER_EXPR_CHANNELS = slice(20, 50)
JAW_CHANNEL = 50

MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = 1


@dataclass
class CorpusConfig:
    n_subjects: int = 10
    n_emotions: int = N_EMOTIONS
    sentences_per_cell: int = 4
    neutral_sentences: int = 6
    t_min: int = 50                 # ground-truth frames at fps
    t_max: int = 150
    d_art: int = 4
    d_m: int = 32
    d_e: int = 32
    fps: int = 25
    feature_hz: int = 50
    split_ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)

    def validate(self) -> None:
        if self.n_subjects < 3:
            raise ConfigError("corpus needs at least 3 subjects for a 3-way split")
        if self.n_emotions != N_EMOTIONS:
            raise ConfigError(f"emotion mixture is {N_EMOTIONS}-way, got {self.n_emotions}")
        if not (1 <= self.t_min <= self.t_max):
            raise ConfigError(f"bad frame-count range [{self.t_min}, {self.t_max}]")
        if self.t_min < self.fps:
            raise ConfigError(
                f"t_min={self.t_min} is under one second of motion at {self.fps} fps"
            )
        if self.feature_hz % self.fps != 0:
            raise ConfigError(f"feature rate {self.feature_hz} not divisible by fps {self.fps}")
        if self.t_max * (self.feature_hz // self.fps) > 8 * self.feature_hz:
            raise ConfigError("t_max implies track duration above the 8 s limit")


@dataclass
class AudioTrackLatent:
    """Stand-in for an audio clip: what feature extractors would consume."""

    duration_s: float
    articulation: np.ndarray        # (T_feat, d_art) at feature_hz
    emotion_mix: np.ndarray         # (8,) simplex weights
    intensity: float                # 0 (neutral) or one of {0.33, 0.66, 1.0}

    def __post_init__(self):
        if not (1.0 <= self.duration_s <= 8.0):
            raise InputError(f"track duration must be in [1, 8] s, got {self.duration_s}")
        self.articulation = np.asarray(self.articulation, dtype=np.float32)
        if self.articulation.ndim != 2:
            raise InputError("articulation latent must be 2-D (frames, channels)")
        self.emotion_mix = np.asarray(self.emotion_mix, dtype=np.float32)
        if self.emotion_mix.shape != (N_EMOTIONS,):
            raise InputError(f"emotion mix must have {N_EMOTIONS} entries")
        if np.any(self.emotion_mix < 0) or not np.isclose(self.emotion_mix.sum(), 1.0, atol=1e-5):
            raise InputError("emotion mix must be a simplex vector")
        allowed = (0.0,) + tuple(INTENSITY_LEVELS.values())
        if not any(abs(self.intensity - v) < 1e-9 for v in allowed):
            raise InputError(f"intensity must be one of {allowed}, got {self.intensity}")

    @property
    def n_frames(self) -> int:
        return self.articulation.shape[0]


@dataclass
class Subject:
    id: int
    shape: NeutralShape


@dataclass
class CorpusItem:
    key: str
    subject_id: int
    emotion_idx: int
    intensity: float
    sentence_idx: int
    motion_gt: MotionSequence
    motion_features: FeatureSequence
    emotion_features: FeatureSequence
    track: AudioTrackLatent | None = None


@dataclass
class Corpus:
    seed: int
    cfg: CorpusConfig
    subjects: list[Subject]
    split: dict[str, list[int]]
    items: list[CorpusItem]

    def subject_by_id(self, sid: int) -> Subject:
        for s in self.subjects:
            if s.id == sid:
                return s
        raise InputError(f"unknown subject id {sid}")

    def items_for_split(self, name: str) -> list[CorpusItem]:
        ids = set(self.split[name])
        return [it for it in self.items if it.subject_id in ids]

    def item_by_key(self, key: str) -> CorpusItem:
        for it in self.items:
            if it.key == key:
                return it
        raise InputError(f"unknown item key {key!r}")


@dataclass
class CorpusMaps:
    """Corpus-wide fixed random maps shared by every item."""

    art_to_mouth: np.ndarray        # (d_art, 20)
    art_to_jaw: np.ndarray          # (d_art,)
    art_to_env: np.ndarray          # (d_art,), envelope readout direction
    emo_directions: np.ndarray      # (8, 30), neutral row is zero
    shape_bias_map: np.ndarray      # (300, 50)


def build_maps(seed: int, d_art: int) -> CorpusMaps:
    rng = init_rng(derive_seed("corpus-maps", seed))
    art_to_mouth = (0.4 / np.sqrt(d_art)) * rng.standard_normal((d_art, 20)).astype(np.float32)
    art_to_jaw = (0.15 / np.sqrt(d_art)) * rng.standard_normal(d_art).astype(np.float32)
    art_to_env = rng.standard_normal(d_art).astype(np.float32)
    art_to_env /= np.linalg.norm(art_to_env)
    # Strong enough that emotion-driven upper-face motion carries variance
    # comparable to the mouth group; a weaker scale pushes the upper face
    # into the late phase of training and starves dynamics comparisons.
    emo_directions = 1.5 * rng.standard_normal((N_EMOTIONS, 30)).astype(np.float32)
    emo_directions[0] = 0.0          # emotion 0 is neutral
    shape_bias_map = (0.3 / np.sqrt(N_SHAPE)) * rng.standard_normal((N_SHAPE, 50)).astype(np.float32)
    return CorpusMaps(art_to_mouth, art_to_jaw, art_to_env, emo_directions, shape_bias_map)


def synth_subject(seed: int, subject_id: int) -> Subject:
    rng = init_rng(derive_seed("subject", seed, subject_id))
    params = (0.5 * rng.standard_normal(N_SHAPE)).astype(np.float32)
    return Subject(id=subject_id, shape=NeutralShape(params))


def synth_track(rng: np.random.Generator, n_frames_gt: int, cfg: CorpusConfig,
                emotion_idx: int, intensity: float) -> AudioTrackLatent:
    """Smooth sum-of-sinusoids articulation latent plus a static emotion latent."""
    factor = cfg.feature_hz // cfg.fps
    t_feat = n_frames_gt * factor
    time = np.arange(t_feat, dtype=np.float64) / cfg.feature_hz
    art = np.zeros((t_feat, cfg.d_art), dtype=np.float64)
    for c in range(cfg.d_art):
        for _ in range(3):
            freq = rng.uniform(0.5, 4.0)
            phase = rng.uniform(0, 2 * np.pi)
            amp = rng.uniform(0.3, 1.0)
            art[:, c] += amp * np.sin(2 * np.pi * freq * time + phase)
    mix = np.zeros(N_EMOTIONS, dtype=np.float32)
    mix[emotion_idx] = 1.0
    return AudioTrackLatent(
        duration_s=t_feat / cfg.feature_hz,
        articulation=art.astype(np.float32),
        emotion_mix=mix,
        intensity=intensity,
    )


def emotion_envelope(art_25: np.ndarray, art_to_env: np.ndarray, window: int = 13) -> np.ndarray:
    """Low-frequency, zero-mean envelope from the articulation signal.

    Centered moving average of a fixed linear readout of the articulation
    channels.  Keeping the envelope linear in the articulation (smoothing is
    linear too) means it is recoverable from the motion-feature stream by a
    linear probe, which keeps the emotion-driven upper-face offsets learnable
    at desk-scale training budgets."""
    signal = art_25.astype(np.float64) @ art_to_env.astype(np.float64)
    kernel = np.ones(window) / window
    env = np.convolve(signal, kernel, mode="same")
    return env - env.mean()


def subject_bias(shape: NeutralShape, maps: CorpusMaps) -> np.ndarray:
    """Constant per-subject offset over expression channels 0..49."""
    return (shape.params.astype(np.float64) @ maps.shape_bias_map.astype(np.float64)).astype(np.float64)


def motion_from_track(track: AudioTrackLatent, shape: NeutralShape, maps: CorpusMaps, cfg: CorpusConfig) -> MotionSequence:
    """Deterministic ground-truth motion for a track and subject shape."""
    factor = cfg.feature_hz // cfg.fps
    t_feat = track.n_frames
    t_gt = t_feat // factor
    art = track.articulation.astype(np.float64)
    art_25 = art[: t_gt * factor].reshape(t_gt, factor, -1).mean(axis=1)
    frames = np.zeros((t_gt, 53), dtype=np.float64)
    frames[:, MOUTH_EXPR_CHANNELS] = art_25 @ maps.art_to_mouth.astype(np.float64)
    frames[:, JAW_CHANNEL] = art_25 @ maps.art_to_jaw.astype(np.float64)
    env = emotion_envelope(art_25, maps.art_to_env)
    direction = track.emotion_mix.astype(np.float64) @ maps.emo_directions.astype(np.float64)
    frames[:, UPPER_EXPR_CHANNELS] = track.intensity * env[:, None] * direction[None, :]
    frames[:, :50] += subject_bias(shape, maps)[None, :]
    return MotionSequence(fps=cfg.fps, frames=frames.astype(np.float32))


def synth_item(
    subject: Subject,
    sentence_idx: int,
    emotion_idx: int,
    intensity: float,
    seed: int,
    cfg: CorpusConfig,
    maps: CorpusMaps | None = None,
    level: int | None = None,
) -> CorpusItem:
    """Build one corpus item; deterministic in all arguments."""
    if not (0 <= emotion_idx < N_EMOTIONS):
        raise InputError(f"emotion index must be in [0, {N_EMOTIONS}), got {emotion_idx}")
    if sentence_idx < 0:
        raise InputError(f"sentence index must be >= 0, got {sentence_idx}")
    if maps is None:
        maps = build_maps(seed, cfg.d_art)
    rng = init_rng(derive_seed("item", seed, subject.id, sentence_idx, emotion_idx, float(intensity)))
    t_gt = int(rng.integers(cfg.t_min, cfg.t_max + 1))
    track = synth_track(rng, t_gt, cfg, emotion_idx, intensity)
    motion = motion_from_track(track, subject.shape, maps, cfg)
    m_feat = motion_features(track, seed, d_m=cfg.d_m)
    e_feat = emotion_features(track, seed, d_e=cfg.d_e)
    if level is None:
        level = next((k for k, v in INTENSITY_LEVELS.items() if abs(v - intensity) < 1e-9), 0)
    key = f"s{subject.id:02d}_e{emotion_idx}_l{level}_t{sentence_idx:02d}"
    return CorpusItem(
        key=key,
        subject_id=subject.id,
        emotion_idx=emotion_idx,
        intensity=float(intensity),
        sentence_idx=sentence_idx,
        motion_gt=motion,
        motion_features=m_feat,
        emotion_features=e_feat,
        track=track,
    )


def split_subjects(subject_ids: list[int], ratios: tuple[float, float, float], seed: int) -> dict[str, list[int]]:
    """Seeded shuffle then contiguous partition into train/val/test."""
    r_train, r_val, r_test = ratios
    if min(ratios) <= 0:
        raise ConfigError(f"split ratios must be positive, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"split ratios must sum to 1, got {sum(ratios)}")
    n = len(subject_ids)
    rng = init_rng(derive_seed("split", seed))
    order = [subject_ids[i] for i in rng.permutation(n)]
    n_train = int(n * r_train)
    n_val = int(n * r_val)
    split = {
        "train": sorted(order[:n_train]),
        "val": sorted(order[n_train : n_train + n_val]),
        "test": sorted(order[n_train + n_val :]),
    }
    if any(len(v) == 0 for v in split.values()):
        raise ConfigError(f"split {ratios} leaves an empty subset for {n} subjects")
    return split


def synth_corpus(seed: int, cfg: CorpusConfig) -> Corpus:
    """The full default corpus: per subject, an (emotions x intensity levels x
    sentences) grid plus extra neutral sentences."""
    cfg.validate()
    maps = build_maps(seed, cfg.d_art)
    subjects = [synth_subject(seed, sid) for sid in range(cfg.n_subjects)]
    split = split_subjects([s.id for s in subjects], cfg.split_ratios, seed)
    items: list[CorpusItem] = []
    for subject in subjects:
        for emotion_idx in range(cfg.n_emotions):
            for level, intensity in INTENSITY_LEVELS.items():
                for sentence in range(cfg.sentences_per_cell):
                    items.append(
                        synth_item(subject, sentence, emotion_idx, intensity, seed, cfg, maps, level=level)
                    )
        for sentence in range(cfg.neutral_sentences):
            items.append(
                synth_item(subject, cfg.sentences_per_cell + sentence, 0, INTENSITY_LEVELS[1], seed, cfg, maps, level=0)
            )
    return Corpus(seed=seed, cfg=cfg, subjects=subjects, split=split, items=items)


def _split_of(corpus: Corpus, subject_id: int) -> str:
    for name, ids in corpus.split.items():
        if subject_id in ids:
            return name
    raise IntegrityError(f"subject {subject_id} missing from split")


def write_corpus(corpus: Corpus, out_dir) -> None:
    out = Path(out_dir)
    (out / "subjects").mkdir(parents=True, exist_ok=True)
    (out / "items").mkdir(parents=True, exist_ok=True)
    manifest_items = []
    for subject in corpus.subjects:
        write_shape(out / "subjects" / f"s{subject.id:02d}.lsfs", subject.shape)
    for item in corpus.items:
        write_motion(out / "items" / f"{item.key}.lsfm", item.motion_gt)
        write_features(out / "items" / f"{item.key}.motion.lsff", item.motion_features)
        write_features(out / "items" / f"{item.key}.emotion.lsff", item.emotion_features)
        manifest_items.append(
            {
                "key": item.key,
                "subject": item.subject_id,
                "emotion": item.emotion_idx,
                "intensity": item.intensity,
                "sentence": item.sentence_idx,
                "split": _split_of(corpus, item.subject_id),
            }
        )
    manifest = {
        "format": "lsf-corpus",
        "version": MANIFEST_VERSION,
        "seed": corpus.seed,
        "fps": corpus.cfg.fps,
        "feature_hz": corpus.cfg.feature_hz,
        "config": {
            "n_subjects": corpus.cfg.n_subjects,
            "n_emotions": corpus.cfg.n_emotions,
            "sentences_per_cell": corpus.cfg.sentences_per_cell,
            "neutral_sentences": corpus.cfg.neutral_sentences,
            "t_min": corpus.cfg.t_min,
            "t_max": corpus.cfg.t_max,
            "d_art": corpus.cfg.d_art,
            "d_m": corpus.cfg.d_m,
            "d_e": corpus.cfg.d_e,
            "split_ratios": list(corpus.cfg.split_ratios),
        },
        "split": corpus.split,
        "subjects": [s.id for s in corpus.subjects],
        "items": manifest_items,
    }
    (out / MANIFEST_NAME).write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def read_corpus(corpus_dir) -> Corpus:
    root = Path(corpus_dir)
    manifest_path = root / MANIFEST_NAME
    if not manifest_path.exists():
        raise IntegrityError(f"{manifest_path}: manifest not found")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    if manifest.get("format") != "lsf-corpus" or manifest.get("version") != MANIFEST_VERSION:
        raise IntegrityError(f"{manifest_path}: not a corpus manifest")
    raw_cfg = manifest["config"]
    cfg = CorpusConfig(
        n_subjects=raw_cfg["n_subjects"],
        n_emotions=raw_cfg["n_emotions"],
        sentences_per_cell=raw_cfg["sentences_per_cell"],
        neutral_sentences=raw_cfg["neutral_sentences"],
        t_min=raw_cfg["t_min"],
        t_max=raw_cfg["t_max"],
        d_art=raw_cfg["d_art"],
        d_m=raw_cfg["d_m"],
        d_e=raw_cfg["d_e"],
        fps=manifest["fps"],
        feature_hz=manifest["feature_hz"],
        split_ratios=tuple(raw_cfg["split_ratios"]),
    )
    subjects = []
    for sid in manifest["subjects"]:
        path = root / "subjects" / f"s{sid:02d}.lsfs"
        if not path.exists():
            raise IntegrityError(f"manifest references missing subject file {path}")
        subjects.append(Subject(id=sid, shape=read_shape(path)))
    split = {name: list(ids) for name, ids in manifest["split"].items()}
    seen_ids = [sid for ids in split.values() for sid in ids]
    if len(seen_ids) != len(set(seen_ids)):
        raise IntegrityError("split assigns a subject to more than one subset")
    items = []
    for row in manifest["items"]:
        key = row["key"]
        paths = {
            "motion": root / "items" / f"{key}.lsfm",
            "motion_features": root / "items" / f"{key}.motion.lsff",
            "emotion_features": root / "items" / f"{key}.emotion.lsff",
        }
        for label, path in paths.items():
            if not path.exists():
                raise IntegrityError(f"manifest references missing {label} file {path}")
        subject_id = row["subject"]
        if subject_id not in {s.id for s in subjects}:
            raise IntegrityError(f"item {key} references unknown subject {subject_id}")
        declared = row["split"]
        if subject_id not in split.get(declared, []):
            raise IntegrityError(f"item {key}: split field {declared!r} disagrees with subject split")
        items.append(
            CorpusItem(
                key=key,
                subject_id=subject_id,
                emotion_idx=row["emotion"],
                intensity=row["intensity"],
                sentence_idx=row["sentence"],
                motion_gt=read_motion(paths["motion"]),
                motion_features=read_features(paths["motion_features"]),
                emotion_features=read_features(paths["emotion_features"]),
                track=None,
            )
        )
    return Corpus(seed=manifest["seed"], cfg=cfg, subjects=subjects, split=split, items=items)
