"""Stage-1 motion autoencoder with a discrete codebook.

Encoder: per-frame linear embed 53 -> C plus sinusoidal positions, then two
transformer blocks (no temporal downsampling, so latent length equals frame
count).  Quantizer:
nearest codebook row under Euclidean distance, ties to the lowest index,
straight-through gradient in training.  Decoder: two transformer blocks plus
a linear head C -> 53.

The training loss is the standard VQ formulation: reconstruction MSE plus a
codebook term ||sg(z) - z_q||^2 and a commitment term beta * ||z - sg(z_q)||^2
(beta = 0.25).  The codebook learns through the codebook term's gradient, not
EMA.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from ._binio import check_magic, read_f32_block, read_u32, write_f32_block, write_u32
from .blocks import add_positions, init_linear, init_transformer_block, linear_forward, transformer_block_forward
from .errors import ConfigError, InputError, IntegrityError
from .flame import N_FRAME
from .params import ParamStore, adam_step, init_rng
from .tensor import Tensor

LSFM_MAGIC = b"LSFM"
LSFM_VERSION = 1

COMMITMENT_BETA = 0.25
ENCODER_BLOCKS = 2
DECODER_BLOCKS = 2


@dataclass
class MotionSequence:
    """T x 53 parameter frames (50 expression, 3 jaw radians) at a fixed fps."""

    fps: int
    frames: np.ndarray

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float32)
        if self.frames.ndim != 2 or self.frames.shape[1] != N_FRAME:
            raise InputError(f"motion frames must be (T, {N_FRAME}), got {self.frames.shape}")
        if not np.isfinite(self.frames).all():
            raise InputError("motion frames contain non-finite values")

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


@dataclass
class Codebook:
    """N x C matrix of discrete latent codes for facial motion patterns."""

    codes: np.ndarray

    def __post_init__(self):
        self.codes = np.asarray(self.codes, dtype=np.float32)
        if self.codes.ndim != 2 or self.codes.shape[0] < 2:
            raise InputError(f"codebook must be (N >= 2, C), got {self.codes.shape}")
        if not np.isfinite(self.codes).all():
            raise InputError("codebook contains non-finite values")

    @property
    def n_codes(self) -> int:
        return self.codes.shape[0]

    @property
    def dim(self) -> int:
        return self.codes.shape[1]


@dataclass
class LatentSequence:
    data: np.ndarray                      # (T, C)
    indices: np.ndarray | None = None     # (T,) int64 codebook rows, if quantized


def init_vqvae(store: ParamStore, latent_dim: int, codebook_size: int, rng: np.random.Generator) -> None:
    """Register encoder, decoder, and codebook parameters under ``vq.``."""
    if codebook_size < 2:
        raise ConfigError(f"codebook needs at least 2 entries, got {codebook_size}")
    init_linear(store, "vq.embed", N_FRAME, latent_dim, rng)
    for i in range(ENCODER_BLOCKS):
        init_transformer_block(store, f"vq.enc.block{i}", latent_dim, rng)
    for i in range(DECODER_BLOCKS):
        init_transformer_block(store, f"vq.dec.block{i}", latent_dim, rng)
    init_linear(store, "vq.head", latent_dim, N_FRAME, rng)
    bound = 1.0 / np.sqrt(latent_dim)
    store.add("vq.codebook", rng.uniform(-bound, bound, (codebook_size, latent_dim)))


def encode(store: ParamStore, frames: Tensor, heads: int) -> Tensor:
    """(T, 53) motion frames to a (T, C) latent sequence."""
    if frames.data.shape[0] < 1:
        raise InputError("encode needs at least one frame")
    z = add_positions(linear_forward(store, "vq.embed", frames))
    for i in range(ENCODER_BLOCKS):
        z = transformer_block_forward(store, f"vq.enc.block{i}", z, heads)
    return z


def decode(store: ParamStore, latents: Tensor, heads: int) -> Tensor:
    """(T, C) latent sequence to (T, 53) motion frames."""
    h = add_positions(latents)
    for i in range(DECODER_BLOCKS):
        h = transformer_block_forward(store, f"vq.dec.block{i}", h, heads)
    return linear_forward(store, "vq.head", h)


def nearest_codes(z: np.ndarray, codebook: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Indices of the nearest codebook row per latent frame, plus distances.

    Squared distances are computed as explicit per-pair differences (never the
    expanded dot-product form) so results match a brute-force scan bit for
    bit; argmin takes the first occurrence, which is the lowest index on ties.
    """
    if codebook.shape[0] < 1:
        raise InputError("empty codebook")
    if z.shape[1] != codebook.shape[1]:
        raise InputError(f"latent width {z.shape[1]} != codebook width {codebook.shape[1]}")
    diff = z[:, None, :] - codebook[None, :, :]
    d2 = np.sum(diff * diff, axis=2)
    return d2.argmin(axis=1), d2


def quantize(z: LatentSequence, codebook) -> tuple[LatentSequence, np.ndarray]:
    """Snap each latent frame to its nearest codebook entry."""
    codes = codebook.codes if isinstance(codebook, Codebook) else np.asarray(codebook)
    idx, _ = nearest_codes(np.asarray(z.data), codes)
    return LatentSequence(data=codes[idx], indices=idx), idx


def quantize_st(z: Tensor, codebook: Tensor, grad_mode: str = "straight_through") -> tuple[Tensor, Tensor, np.ndarray]:
    """Differentiable quantization: (decoder input, gathered codes, indices).

    ``straight_through`` passes the reconstruction gradient from the quantized
    output to the encoder unchanged; ``blocked`` severs it (negative control).
    The gathered-codes tensor carries gradient into the codebook rows.
    """
    if grad_mode not in ("straight_through", "blocked"):
        raise ConfigError(f"unknown quantizer grad_mode {grad_mode!r}")
    idx, _ = nearest_codes(z.data, codebook.data)
    gathered = T.gather_rows(codebook, idx)
    if grad_mode == "straight_through":
        zq = T.add(z, T.sub(gathered, z).detach())
    else:
        zq = gathered.detach()
    return zq, gathered, idx


def stage1_loss(
    store: ParamStore,
    motion: MotionSequence,
    heads: int,
    beta: float = COMMITMENT_BETA,
    grad_mode: str = "straight_through",
) -> tuple[Tensor, dict[str, float]]:
    """Total VQ-VAE loss and its (reconstruction, codebook, commitment) parts."""
    frames = Tensor(motion.frames.astype(store.dtype))
    z = encode(store, frames, heads)
    zq, gathered, idx = quantize_st(z, store["vq.codebook"], grad_mode=grad_mode)
    recon = T.mse(decode(store, zq, heads), frames)
    codebook_term = T.mse(z.detach(), gathered)
    commit_term = T.mse(z, gathered.detach())
    total = T.add(T.add(recon, codebook_term), T.scale(commit_term, beta))
    components = {
        "reconstruction": recon.data.item(),
        "codebook": codebook_term.data.item(),
        "commitment": commit_term.data.item(),
        "codes_used": int(np.unique(idx).size),
    }
    return total, components


@dataclass
class STAnchor:
    """Quantizer decision frozen at a base point, for gradient checking.

    The straight-through loss is discontinuous wherever a code assignment
    flips, so raw finite differences are meaningless there.  With the
    assignment (indices), the quantization offset, and the stop-gradient
    snapshots held constant, the loss becomes the smooth surrogate whose
    exact gradient the straight-through backward computes.
    """

    indices: np.ndarray
    delta: np.ndarray      # book[idx] - z at the base point
    z_snap: np.ndarray     # sg(z) at the base point
    q_snap: np.ndarray     # sg(book[idx]) at the base point


def stage1_st_anchor(store: ParamStore, motion: MotionSequence, heads: int) -> STAnchor:
    frames = Tensor(motion.frames.astype(store.dtype))
    z = encode(store, frames, heads)
    idx, _ = nearest_codes(z.data, store["vq.codebook"].data)
    gathered = store["vq.codebook"].data[idx]
    return STAnchor(
        indices=idx,
        delta=gathered - z.data,
        z_snap=z.data.copy(),
        q_snap=gathered.copy(),
    )


def stage1_loss_anchored(
    store: ParamStore,
    motion: MotionSequence,
    heads: int,
    anchor: STAnchor,
    beta: float = COMMITMENT_BETA,
) -> Tensor:
    """Straight-through surrogate with the quantizer decision pinned.

    At the anchor's base point this has the same value as stage1_loss and its
    true gradient equals the straight-through backward, which makes it the
    right target for finite-difference verification.
    """
    frames = Tensor(motion.frames.astype(store.dtype))
    z = encode(store, frames, heads)
    zq = T.add(z, Tensor(anchor.delta.astype(store.dtype)))
    recon = T.mse(decode(store, zq, heads), frames)
    codebook_term = T.mse(Tensor(anchor.z_snap.astype(store.dtype)), T.gather_rows(store["vq.codebook"], anchor.indices))
    commit_term = T.mse(z, Tensor(anchor.q_snap.astype(store.dtype)))
    return T.add(T.add(recon, codebook_term), T.scale(commit_term, beta))


@dataclass
class Stage1Config:
    latent_dim: int = 32
    codebook_size: int = 256
    heads: int = 4
    lr: float = 1e-4
    weight_decay: float = 1e-2      # AdamW
    betas: tuple[float, float] = (0.9, 0.95)
    beta: float = COMMITMENT_BETA
    batch_size: int = 8
    max_epochs: int = 60
    patience: int | None = 5
    max_steps: int | None = None
    seed: int = 0


@dataclass
class TrainLog:
    epochs: list[dict] = field(default_factory=list)
    best_epoch: int = -1
    best_val_loss: float = float("inf")
    stopped_early: bool = False
    notes: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        payload = {
            "epochs": self.epochs,
            "best_epoch": self.best_epoch,
            "best_val_loss": self.best_val_loss,
            "stopped_early": self.stopped_early,
            "notes": self.notes,
        }
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def _length_bucketed_batches(items: list, batch_size: int, rng: np.random.Generator) -> list[list[int]]:
    """Batches of same-length sequences, order shuffled deterministically."""
    buckets: dict[int, list[int]] = {}
    for i, item in enumerate(items):
        buckets.setdefault(item.n_frames, []).append(i)
    batches: list[list[int]] = []
    for length in sorted(buckets):
        idxs = buckets[length]
        for start in range(0, len(idxs), batch_size):
            batches.append(idxs[start : start + batch_size])
    order = rng.permutation(len(batches))
    return [batches[i] for i in order]


def train_stage1(
    train_items: list[MotionSequence],
    val_items: list[MotionSequence],
    cfg: Stage1Config,
) -> tuple[dict[str, np.ndarray], TrainLog]:
    """Train the motion autoencoder; returns best-checkpoint arrays and a log.

    Early stopping: training ends once validation loss has not improved for
    ``patience`` consecutive epochs, and the best-validation parameters are
    the ones returned.  Fully deterministic given the config seed.
    """
    if not train_items:
        raise ConfigError("stage-1 training needs a non-empty train split")
    store = ParamStore()
    init_vqvae(store, cfg.latent_dim, cfg.codebook_size, init_rng(cfg.seed))

    def val_loss() -> tuple[float, float]:
        if not val_items:
            return float("nan"), 0.0
        total = 0.0
        used: set[int] = set()
        for item in val_items:
            loss, comp = stage1_loss(store, item, cfg.heads, beta=cfg.beta)
            total += loss.data.item()
            z = encode(store, Tensor(item.frames.astype(store.dtype)), cfg.heads)
            idx, _ = nearest_codes(z.data, store["vq.codebook"].data)
            used.update(int(i) for i in idx)
        return total / len(val_items), len(used) / cfg.codebook_size

    log = TrainLog()
    best_arrays = store.arrays()
    bad_epochs = 0
    steps_done = 0
    epoch_rng = init_rng(derive_epoch_seed(cfg.seed))
    for epoch in range(cfg.max_epochs):
        train_total = 0.0
        n_train_items = 0
        for batch in _length_bucketed_batches(train_items, cfg.batch_size, epoch_rng):
            if cfg.max_steps is not None and steps_done >= cfg.max_steps:
                break
            store.zero_grad()
            for i in batch:
                loss, _ = stage1_loss(store, train_items[i], cfg.heads, beta=cfg.beta)
                T.scale(loss, 1.0 / len(batch)).backward()
                train_total += loss.data.item()
                n_train_items += 1
            adam_step(store, cfg.lr, betas=cfg.betas, weight_decay=cfg.weight_decay)
            steps_done += 1
        vloss, code_frac = val_loss()
        entry = {
            "epoch": epoch,
            "train_loss": train_total / max(1, n_train_items),
            "val_loss": vloss,
            "codebook_used_frac": code_frac,
            "steps": steps_done,
        }
        log.epochs.append(entry)
        track = vloss if val_items else entry["train_loss"]
        if track < log.best_val_loss:
            log.best_val_loss = track
            log.best_epoch = epoch
            best_arrays = store.arrays()
            bad_epochs = 0
        else:
            bad_epochs += 1
            if cfg.patience is not None and bad_epochs >= cfg.patience:
                log.stopped_early = True
                break
        if cfg.max_steps is not None and steps_done >= cfg.max_steps:
            break
    return best_arrays, log


def derive_epoch_seed(seed: int) -> int:
    from .features import derive_seed

    return derive_seed("stage1-epochs", seed)


def write_motion(path, motion: MotionSequence) -> None:
    with open(path, "wb") as fh:
        fh.write(LSFM_MAGIC)
        write_u32(fh, LSFM_VERSION)
        write_u32(fh, motion.fps)
        write_u32(fh, motion.n_frames)
        write_u32(fh, N_FRAME)
        write_f32_block(fh, motion.frames)


def read_motion(path) -> MotionSequence:
    path = Path(path)
    with open(path, "rb") as fh:
        check_magic(fh, LSFM_MAGIC, path)
        version = read_u32(fh, "version")
        if version != LSFM_VERSION:
            raise IntegrityError(f"{path}: unsupported LSFM version {version}")
        fps = read_u32(fh, "fps")
        t = read_u32(fh, "frame count")
        d = read_u32(fh, "frame dim")
        if d != N_FRAME:
            raise IntegrityError(f"{path}: frame dim {d}, expected {N_FRAME}")
        frames = read_f32_block(fh, t * d, "motion data").reshape(t, d)
    return MotionSequence(fps=fps, frames=frames)
