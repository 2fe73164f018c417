"""Stage-2 assembly: speech features + neutral shape in, animation out.

The encoder path is identity_encode -> style modulation -> fusion stack ->
linear head into the frozen stage-1 latent space; the frozen stage-1
quantizer and decoder turn those latents into parameter frames.  Generation
is stochastic: per frame a code index is drawn from
softmax(-||z_t - code_k||^2 / tau); tau = 0 degrades to the deterministic
argmin with lowest-index tie-break.

Nothing in this module accepts an emotion label or an identity label: the
only identity input is a NeutralShape and the only emotion input is a
feature sequence.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .blocks import init_linear, linear_forward
from .checkpoint import read_checkpoint, write_checkpoint
from .errors import ConfigError, IntegrityError, StateError
from .features import FeatureSequence, align_to_fps, identity_encode, init_identity_encoder
from .flame import NeutralShape
from .hifb import HifbConfig, hifb_forward, init_hifb, init_style_modulator
from .params import ParamStore, adam_step, init_rng
from .tensor import Tensor
from .vqvae import MotionSequence, decode, nearest_codes, quantize_st

STAGE1_PREFIX = "vq."


@dataclass
class SamplerConfig:
    temperature: float = 1.0
    n_samples: int = 1
    seed: int = 0

    def validate(self) -> None:
        if self.temperature < 0:
            raise ConfigError(f"sampler temperature must be >= 0, got {self.temperature}")
        if self.n_samples < 1:
            raise ConfigError(f"sampler needs n_samples >= 1, got {self.n_samples}")


@dataclass
class PipelineCheckpoint:
    """Frozen stage-1 tensors plus trainable stage-2 tensors, by name."""

    stage1: dict[str, np.ndarray]
    stage2: dict[str, np.ndarray]

    def merged(self) -> dict[str, np.ndarray]:
        overlap = set(self.stage1) & set(self.stage2)
        if overlap:
            raise StateError(f"stage-1/stage-2 tensor names collide: {sorted(overlap)[:3]}")
        out = dict(self.stage1)
        out.update(self.stage2)
        return out


def save_pipeline(path, ckpt: PipelineCheckpoint) -> None:
    write_checkpoint(path, ckpt.merged())


def load_pipeline(path) -> PipelineCheckpoint:
    arrays = read_checkpoint(path)
    stage1 = {k: v for k, v in arrays.items() if k.startswith(STAGE1_PREFIX)}
    stage2 = {k: v for k, v in arrays.items() if not k.startswith(STAGE1_PREFIX)}
    if not stage1:
        raise IntegrityError(f"{path}: no stage-1 tensors ({STAGE1_PREFIX}*) found")
    return PipelineCheckpoint(stage1=stage1, stage2=stage2)


@dataclass
class Stage2Config:
    d: int = 32
    d_id: int = 32
    latent_dim: int = 32
    heads: int = 4
    hifb: HifbConfig = field(default_factory=HifbConfig)
    fps: int = 25
    lr: float = 1e-5
    weight_decay: float = 0.0      # plain Adam
    betas: tuple[float, float] = (0.9, 0.95)
    velocity_weight: float = 0.1
    commit_weight: float = 0.1
    quantize_mode: str = "none"    # "none" decodes the raw projection;
                                   # "straight_through" decodes hard-quantized latents
    batch_size: int = 8
    max_epochs: int = 60
    patience: int | None = 5
    max_steps: int | None = None
    seed: int = 0

    def validate(self) -> None:
        if self.quantize_mode not in ("none", "straight_through"):
            raise ConfigError(f"unknown stage-2 quantize_mode {self.quantize_mode!r}")


def init_stage2(store: ParamStore, cfg: Stage2Config, rng: np.random.Generator, d_m: int, d_e: int) -> None:
    """Register all trainable stage-2 parameters (identity MLP, modulator,
    fusion stack, latent head)."""
    init_identity_encoder(store, cfg.d_id, rng)
    init_style_modulator(store, cfg.d_id, d_m, d_e, cfg.d, rng)
    init_hifb(store, cfg.hifb, rng)
    init_linear(store, "head", cfg.d, cfg.latent_dim, rng)


def sie_forward(store: ParamStore, m25: FeatureSequence, e25: FeatureSequence, shape: NeutralShape, cfg: Stage2Config) -> Tensor:
    """Aligned feature streams plus neutral shape to pre-quantization latents (T, C)."""
    z_id = identity_encode(store, shape)
    m = Tensor(m25.data.astype(store.dtype))
    e = Tensor(e25.data.astype(store.dtype))
    fused = hifb_forward(store, m, e, z_id, cfg.hifb)
    return linear_forward(store, "head", fused)


def stage2_loss_from_latents(
    zhat: Tensor,
    frozen: ParamStore,
    gt: MotionSequence,
    heads: int,
    velocity_weight: float,
    commit_weight: float = 0.1,
    quantize_mode: str = "none",
) -> Tensor:
    """Decode the projected latents with the frozen stage-1 decoder and score
    against the ground truth.

    Default path decodes the raw projection (the quantizer stays out of the
    training graph) and adds a commitment pull ||zhat - sg(Q(zhat))||^2 so the
    latents stay on the codebook manifold that generation-time sampling snaps
    to.  The "straight_through" mode instead decodes hard-quantized latents
    with a straight-through gradient; at desk scale it optimizes far worse
    (piecewise-constant loss in zhat) and exists for comparison.
    """
    target_dtype = zhat.data.dtype
    if quantize_mode == "straight_through":
        zq, _, _ = quantize_st(zhat, frozen["vq.codebook"])
        pred = decode(frozen, zq, heads)
    elif quantize_mode == "none":
        pred = decode(frozen, zhat, heads)
    else:
        raise ConfigError(f"unknown stage-2 quantize_mode {quantize_mode!r}")
    target = Tensor(gt.frames.astype(target_dtype))
    loss = T.mse(pred, target)
    t = gt.n_frames
    if velocity_weight > 0.0 and t >= 2:
        pred_vel = T.sub(T.slice_rows(pred, 1, t), T.slice_rows(pred, 0, t - 1))
        gt_vel = T.sub(T.slice_rows(target, 1, t), T.slice_rows(target, 0, t - 1))
        loss = T.add(loss, T.scale(T.mse(pred_vel, gt_vel), velocity_weight))
    if quantize_mode == "none" and commit_weight > 0.0:
        _, gathered, _ = quantize_st(zhat, frozen["vq.codebook"])
        loss = T.add(loss, T.scale(T.mse(zhat, gathered.detach()), commit_weight))
    return loss


@dataclass
class Stage2Item:
    """One training example: aligned feature streams, shape, ground truth."""

    key: str
    m25: FeatureSequence
    e25: FeatureSequence
    shape: NeutralShape
    gt: MotionSequence

    @property
    def n_frames(self) -> int:
        return self.gt.n_frames


def sample_code_indices(d2: np.ndarray, temperature: float, rng: np.random.Generator) -> np.ndarray:
    """Draw one codebook index per frame from softmax(-d2 / tau).

    tau = 0 is the deterministic argmin (first occurrence wins ties).
    """
    if temperature < 0:
        raise ConfigError(f"temperature must be >= 0, got {temperature}")
    if temperature == 0.0:
        return d2.argmin(axis=1)
    logits = -d2 / temperature
    logits = logits - logits.max(axis=1, keepdims=True)
    probs = np.exp(logits)
    probs /= probs.sum(axis=1, keepdims=True)
    cdf = np.cumsum(probs, axis=1)
    u = rng.random((d2.shape[0], 1))
    idx = (cdf < u).sum(axis=1)
    return np.minimum(idx, d2.shape[1] - 1)


def generate(
    m_feat: FeatureSequence,
    e_feat: FeatureSequence,
    shape: NeutralShape,
    ckpt: PipelineCheckpoint,
    sampler: SamplerConfig,
    cfg: Stage2Config,
) -> list[MotionSequence]:
    """Produce n motion sequences for one track; pure given (inputs, seed)."""
    sampler.validate()
    frozen = _store_from_arrays(ckpt.stage1).freeze()
    trainable = _store_from_arrays(ckpt.stage2).freeze()
    m25 = align_to_fps(m_feat, cfg.fps) if m_feat.rate_hz != cfg.fps else m_feat
    e25 = align_to_fps(e_feat, cfg.fps) if e_feat.rate_hz != cfg.fps else e_feat
    zhat = sie_forward(trainable, m25, e25, shape, cfg)
    _, d2 = nearest_codes(zhat.data, frozen["vq.codebook"].data)
    rng = init_rng(sampler.seed)
    samples = []
    codebook = frozen["vq.codebook"].data
    for _ in range(sampler.n_samples):
        idx = sample_code_indices(d2, sampler.temperature, rng)
        frames = decode(frozen, Tensor(codebook[idx]), cfg.heads).data
        samples.append(MotionSequence(fps=cfg.fps, frames=frames.astype(np.float32)))
    return samples


def _store_from_arrays(arrays: dict[str, np.ndarray]) -> ParamStore:
    store = ParamStore()
    for name in sorted(arrays):
        store.add(name, arrays[name])
    return store


def train_stage2(
    train_items: list[Stage2Item],
    val_items: list[Stage2Item],
    stage1_arrays: dict[str, np.ndarray],
    cfg: Stage2Config,
    d_m: int | None = None,
    d_e: int | None = None,
) -> tuple[PipelineCheckpoint, "TrainLog"]:
    """Train the stage-2 encoder against a frozen stage-1 checkpoint.

    Stage-1 tensors are never touched; the returned checkpoint carries them
    bit-identical alongside the best-on-validation stage-2 weights.
    """
    from .vqvae import TrainLog, _length_bucketed_batches

    if not train_items:
        raise ConfigError("stage-2 training needs a non-empty train split")
    cfg.validate()
    missing = [k for k in ("vq.codebook", "vq.head.w") if k not in stage1_arrays]
    if missing:
        raise IntegrityError(f"stage-1 checkpoint lacks required tensors: {missing}")
    frozen = _store_from_arrays({k: v for k, v in stage1_arrays.items() if k.startswith(STAGE1_PREFIX)})
    frozen.freeze()
    if d_m is None:
        d_m = train_items[0].m25.dim
    if d_e is None:
        d_e = train_items[0].e25.dim
    store = ParamStore()
    init_stage2(store, cfg, init_rng(cfg.seed), d_m=d_m, d_e=d_e)

    def item_loss(item: Stage2Item) -> Tensor:
        zhat = sie_forward(store, item.m25, item.e25, item.shape, cfg)
        return stage2_loss_from_latents(
            zhat, frozen, item.gt, cfg.heads, cfg.velocity_weight,
            commit_weight=cfg.commit_weight, quantize_mode=cfg.quantize_mode,
        )

    log = TrainLog()
    log.notes.append(
        f"optimizer=Adam lr={cfg.lr} weight_decay={cfg.weight_decay} "
        f"quantize_mode={cfg.quantize_mode} commit_weight={cfg.commit_weight}"
    )
    best_arrays = store.arrays()
    bad_epochs = 0
    steps_done = 0
    from .features import derive_seed

    epoch_rng = init_rng(derive_seed("stage2-epochs", cfg.seed))
    for epoch in range(cfg.max_epochs):
        train_total = 0.0
        n_items = 0
        for batch in _length_bucketed_batches(train_items, cfg.batch_size, epoch_rng):
            if cfg.max_steps is not None and steps_done >= cfg.max_steps:
                break
            store.zero_grad()
            for i in batch:
                loss = item_loss(train_items[i])
                T.scale(loss, 1.0 / len(batch)).backward()
                train_total += loss.data.item()
                n_items += 1
            adam_step(store, cfg.lr, betas=cfg.betas, weight_decay=cfg.weight_decay)
            steps_done += 1
        if val_items:
            vloss = sum(item_loss(it).data.item() for it in val_items) / len(val_items)
        else:
            vloss = float("nan")
        entry = {
            "epoch": epoch,
            "train_loss": train_total / max(1, n_items),
            "val_loss": vloss,
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
    stage1_kept = {k: np.asarray(v, dtype=np.float32).copy() for k, v in stage1_arrays.items()}
    return PipelineCheckpoint(stage1=stage1_kept, stage2=best_arrays), log
