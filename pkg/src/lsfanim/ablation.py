"""Controlled comparison of representation and fusion strategies.

Representation modes pick which inputs the encoder may read: ``no-style``
(motion features only), ``emotion-only``, ``emotion+identity``.  Fusion modes
pick the architecture: ``style-vector`` (a single sequence-level vector from
mean-pooled emotion features and the identity embedding, injected into a
plain motion encoder), ``gate``, ``xattn-late``, and ``hifb``.

Valid combinations: ``no-style`` pairs only with ``style-vector`` (it is the
motion-only row of that architecture); the dual-stream fusions accept
``emotion-only`` and ``emotion+identity``.  A removed stream is replaced by
zeros of the same width, never by a narrower architecture, so parameter
counts stay comparable within a fusion mode.

Every variant trains from the same frozen stage-1 checkpoint on the same
split with the same budget; the report header carries content hashes so a
reader can verify that.  Reads of the emotion stream and identity shape go
through counted accessors, which is how the no-style variant proves it never
touches them.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .blocks import init_linear, init_transformer_block, linear_forward, transformer_block_forward
from .corpus import Corpus
from .errors import ConfigError
from .features import derive_seed, identity_encode, init_identity_encoder
from .flame import BlendshapeModel, RegionMask, decode_sequence
from .hifb import (
    gate_fusion,
    hifb_forward,
    init_gate_fusion,
    init_hifb,
    init_style_modulator,
    init_xattn_late_fusion,
    xattn_late_fusion,
)
from .metrics import EvalItem, evaluate_corpus
from .params import ParamStore, adam_step, init_rng, uniform_init
from .pipeline import Stage2Config, Stage2Item, _store_from_arrays, sample_code_indices
from .tensor import Tensor
from .vqvae import decode, nearest_codes
from .pipeline import stage2_loss_from_latents

REPRESENTATIONS = ("no-style", "emotion-only", "emotion+identity")
FUSIONS = ("style-vector", "gate", "xattn-late", "hifb")


@dataclass
class VariantSpec:
    name: str
    representation: str
    fusion: str

    def validate(self) -> None:
        if self.representation not in REPRESENTATIONS:
            raise ConfigError(f"unknown representation {self.representation!r}")
        if self.fusion not in FUSIONS:
            raise ConfigError(f"unknown fusion {self.fusion!r}")
        if self.representation == "no-style" and self.fusion != "style-vector":
            raise ConfigError(
                "no-style removes the emotion stream entirely and is only valid "
                "with style-vector fusion"
            )

    @property
    def uses_emotion(self) -> bool:
        return self.representation in ("emotion-only", "emotion+identity")

    @property
    def uses_identity(self) -> bool:
        return self.representation == "emotion+identity"


DEFAULT_VARIANTS = [
    VariantSpec("no-style", "no-style", "style-vector"),
    VariantSpec("emotion-style", "emotion-only", "style-vector"),
    VariantSpec("emotion+iden-style", "emotion+identity", "style-vector"),
    VariantSpec("gate", "emotion+identity", "gate"),
    VariantSpec("xattn-late", "emotion+identity", "xattn-late"),
    VariantSpec("hifb", "emotion+identity", "hifb"),
]


class InputGate:
    """Counted access to one item's inputs; motion is always free to read."""

    def __init__(self, item: Stage2Item):
        self._item = item
        self.counts = {"emotion": 0, "identity": 0}

    def motion(self):
        return self._item.m25

    def emotion(self):
        self.counts["emotion"] += 1
        return self._item.e25

    def identity(self):
        self.counts["identity"] += 1
        return self._item.shape


def init_variant(store: ParamStore, spec: VariantSpec, cfg: Stage2Config, d_m: int, d_e: int,
                 rng: np.random.Generator) -> None:
    spec.validate()
    init_identity_encoder(store, cfg.d_id, rng)
    if spec.fusion == "style-vector":
        store.add("style.w_m", uniform_init(rng, d_m, (d_m, cfg.d)))
        init_linear(store, "style.s_proj", d_e + cfg.d_id, cfg.d, rng)
        for layer in range(cfg.hifb.layers):
            init_transformer_block(store, f"style.block{layer}", cfg.d, rng)
    else:
        init_style_modulator(store, cfg.d_id, d_m, d_e, cfg.d, rng)
        if spec.fusion == "gate":
            init_gate_fusion(store, cfg.hifb, rng)
        elif spec.fusion == "xattn-late":
            init_xattn_late_fusion(store, cfg.hifb, rng)
        else:
            init_hifb(store, cfg.hifb, rng)
    init_linear(store, "head", cfg.d, cfg.latent_dim, rng)


def variant_forward(store: ParamStore, spec: VariantSpec, gate: InputGate, cfg: Stage2Config,
                    d_e: int) -> Tensor:
    """Pre-quantization latents (T, C) for one item under a variant."""
    m_feat = gate.motion()
    t = m_feat.n_frames
    m = Tensor(m_feat.data.astype(store.dtype))
    if spec.uses_emotion:
        e = Tensor(gate.emotion().data.astype(store.dtype))
    else:
        e = Tensor(np.zeros((t, d_e), dtype=store.dtype))
    if spec.uses_identity:
        z_id = identity_encode(store, gate.identity())
    else:
        z_id = Tensor(np.zeros((1, cfg.d_id), dtype=store.dtype))

    if spec.fusion == "style-vector":
        from .blocks import add_positions

        style = linear_forward(store, "style.s_proj", T.concat_cols([T.mean_rows(e), z_id]))
        h = add_positions(T.add(T.matmul(m, store["style.w_m"]), style))
        for layer in range(cfg.hifb.layers):
            h = transformer_block_forward(store, f"style.block{layer}", h, cfg.heads)
        fused = h
    elif spec.fusion == "gate":
        fused = gate_fusion(store, m, e, z_id, cfg.hifb)
    elif spec.fusion == "xattn-late":
        fused = xattn_late_fusion(store, m, e, z_id, cfg.hifb)
    else:
        fused = hifb_forward(store, m, e, z_id, cfg.hifb)
    return linear_forward(store, "head", fused)


@dataclass
class AblationResult:
    header: dict
    rows: list[dict]
    means: dict[str, dict]
    access_counts: dict[str, dict]

    def to_json(self) -> str:
        payload = {
            "header": self.header,
            "rows": self.rows,
            "means": self.means,
            "access_counts": self.access_counts,
        }
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        columns = ["variant", "seed", "mve", "lve", "fdd", "mee", "ce", "diversity"]
        writer.writerow(columns)
        for row in self.rows:
            writer.writerow([row[c] for c in columns])
        for name, mean in sorted(self.means.items()):
            writer.writerow([name, "mean"] + [mean[c] for c in columns[2:]])
        return buf.getvalue()


def _hash_arrays(arrays: dict[str, np.ndarray]) -> str:
    h = hashlib.sha256()
    for name in sorted(arrays):
        h.update(name.encode("utf-8"))
        h.update(np.ascontiguousarray(arrays[name]).tobytes())
    return h.hexdigest()


def _hash_corpus(corpus: Corpus) -> str:
    h = hashlib.sha256()
    h.update(str(corpus.seed).encode())
    h.update(json.dumps(corpus.split, sort_keys=True).encode())
    for item in corpus.items:
        h.update(item.key.encode())
        h.update(item.motion_gt.frames.tobytes())
    return h.hexdigest()


def train_variant(
    spec: VariantSpec,
    train_items: list[Stage2Item],
    stage1_arrays: dict[str, np.ndarray],
    cfg: Stage2Config,
    d_e: int,
) -> tuple[ParamStore, dict[str, int]]:
    """Fixed-budget training of one variant; returns the store and the
    aggregate input-access counters."""
    from .vqvae import _length_bucketed_batches

    frozen = _store_from_arrays(stage1_arrays).freeze()
    store = ParamStore()
    init_variant(store, spec, cfg, d_m=train_items[0].m25.dim, d_e=d_e, rng=init_rng(cfg.seed))
    totals = {"emotion": 0, "identity": 0}
    steps = 0
    epoch_rng = init_rng(derive_seed("ablation-epochs", cfg.seed, spec.name))
    for _epoch in range(cfg.max_epochs):
        done = False
        for batch in _length_bucketed_batches(train_items, cfg.batch_size, epoch_rng):
            if cfg.max_steps is not None and steps >= cfg.max_steps:
                done = True
                break
            store.zero_grad()
            for i in batch:
                gate = InputGate(train_items[i])
                zhat = variant_forward(store, spec, gate, cfg, d_e)
                loss = stage2_loss_from_latents(
                    zhat, frozen, train_items[i].gt, cfg.heads, cfg.velocity_weight,
                    commit_weight=cfg.commit_weight, quantize_mode=cfg.quantize_mode,
                )
                T.scale(loss, 1.0 / len(batch)).backward()
                for k in totals:
                    totals[k] += gate.counts[k]
            adam_step(store, cfg.lr, betas=cfg.betas, weight_decay=cfg.weight_decay)
            steps += 1
        if done or (cfg.max_steps is not None and steps >= cfg.max_steps):
            break
    return store, totals


def evaluate_variant(
    spec: VariantSpec,
    store: ParamStore,
    test_items: list[Stage2Item],
    stage1_arrays: dict[str, np.ndarray],
    cfg: Stage2Config,
    d_e: int,
    model: BlendshapeModel,
    lip_mask: RegionMask,
    upper_mask: RegionMask,
    n_samples: int,
    temperature: float,
    eval_seed: int,
    fdd_mode: str = "abs",
) -> tuple[dict, dict[str, int]]:
    """Six metrics on the test split: sample 0 is the deterministic (tau=0)
    prediction; the stochastic samples feed mee/ce/diversity."""
    frozen = _store_from_arrays(stage1_arrays).freeze()
    codebook = frozen["vq.codebook"].data
    eval_items = []
    totals = {"emotion": 0, "identity": 0}
    for item in test_items:
        gate = InputGate(item)
        zhat = variant_forward(store, spec, gate, cfg, d_e)
        for k in totals:
            totals[k] += gate.counts[k]
        _, d2 = nearest_codes(zhat.data, codebook)
        rng = init_rng(derive_seed("ablation-eval", eval_seed, item.key))
        preds = []
        idx0 = sample_code_indices(d2, 0.0, rng)
        preds.append(decode(frozen, Tensor(codebook[idx0]), cfg.heads).data)
        for _ in range(n_samples):
            idx = sample_code_indices(d2, temperature, rng)
            preds.append(decode(frozen, Tensor(codebook[idx]), cfg.heads).data)
        gt_v = decode_sequence(model, item.shape, item.gt.frames)
        pred_v = [decode_sequence(model, item.shape, p) for p in preds]
        eval_items.append(
            EvalItem(gt=gt_v, preds=pred_v, lip_mask=lip_mask, upper_mask=upper_mask,
                     template=model.template, name=item.key)
        )
    report = evaluate_corpus(eval_items, fdd_mode=fdd_mode)
    row = {
        "mve": report.mve,
        "lve": report.lve,
        "fdd": report.fdd,
        "mee": report.mee,
        "ce": report.ce,
        "diversity": report.diversity,
    }
    return row, totals


def run_ablation(
    corpus: Corpus,
    stage1_arrays: dict[str, np.ndarray],
    variants: list[VariantSpec],
    seeds: list[int],
    cfg: Stage2Config,
    model: BlendshapeModel,
    lip_mask: RegionMask,
    upper_mask: RegionMask,
    n_samples: int = 5,
    temperature: float = 1.0,
    fdd_mode: str = "abs",
    max_train_frames: int | None = None,
) -> AblationResult:
    """Train and evaluate every (variant, seed) pair under an identical budget.

    ``max_train_frames`` optionally restricts training to sequences of at most
    that many frames (a wall-clock lever: the pair table grows quadratically
    with length); evaluation always uses the full test split.  The filter is
    deterministic and shared by every variant, and is recorded in the header.
    """
    from .features import align_to_fps

    for spec in variants:
        spec.validate()

    def stage2_items(split: str) -> list[Stage2Item]:
        out = []
        for it in corpus.items_for_split(split):
            out.append(
                Stage2Item(
                    key=it.key,
                    m25=align_to_fps(it.motion_features, cfg.fps),
                    e25=align_to_fps(it.emotion_features, cfg.fps),
                    shape=corpus.subject_by_id(it.subject_id).shape,
                    gt=it.motion_gt,
                )
            )
        return out

    train_items = stage2_items("train")
    if max_train_frames is not None:
        train_items = [it for it in train_items if it.n_frames <= max_train_frames]
        if not train_items:
            raise ConfigError(f"max_train_frames={max_train_frames} filters out every training item")
    test_items = stage2_items("test")
    d_e = train_items[0].e25.dim
    header = {
        "stage1_hash": _hash_arrays(stage1_arrays),
        "corpus_hash": _hash_corpus(corpus),
        "split": corpus.split,
        "budget": {
            "max_steps": cfg.max_steps,
            "max_epochs": cfg.max_epochs,
            "lr": cfg.lr,
            "batch_size": cfg.batch_size,
            "max_train_frames": max_train_frames,
            "n_train_items": len(train_items),
        },
        "seeds": list(seeds),
        "n_eval_samples": n_samples,
        "eval_temperature": temperature,
        "fdd_mode": fdd_mode,
    }
    rows = []
    access: dict[str, dict] = {}
    for spec in variants:
        for seed in seeds:
            run_cfg = Stage2Config(**{**cfg.__dict__, "seed": seed})
            store, train_counts = train_variant(spec, train_items, stage1_arrays, run_cfg, d_e)
            row, eval_counts = evaluate_variant(
                spec, store, test_items, stage1_arrays, run_cfg, d_e,
                model, lip_mask, upper_mask, n_samples, temperature, eval_seed=seed,
                fdd_mode=fdd_mode,
            )
            rows.append({"variant": spec.name, "seed": seed, **row})
            bucket = access.setdefault(spec.name, {"emotion": 0, "identity": 0})
            for k in bucket:
                bucket[k] += train_counts[k] + eval_counts[k]
    means = {}
    for spec in variants:
        mine = [r for r in rows if r["variant"] == spec.name]
        means[spec.name] = {
            k: float(np.mean([r[k] for r in mine]))
            for k in ("mve", "lve", "fdd", "mee", "ce", "diversity")
        }
    return AblationResult(header=header, rows=rows, means=means, access_counts=access)
