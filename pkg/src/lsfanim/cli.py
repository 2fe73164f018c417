"""``lsf`` command line: corpus synthesis, both training stages, generation,
evaluation, and heatmap export.

Exit codes: 0 success, 2 config/usage error, 3 I/O or integrity error,
4 numerical failure (non-finite values).  All commands are reproducible:
given the same config and seed (and LSF_THREADS=1) they produce byte-identical
outputs, and no command mutates its inputs.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import flame, metrics
from .config import default_config, load_config
from .corpus import read_corpus, synth_corpus, write_corpus
from .checkpoint import read_checkpoint, write_checkpoint
from .errors import ConfigError, InputError, IntegrityError, NonFiniteError
from .features import align_to_fps, derive_seed
from .pipeline import (
    SamplerConfig,
    Stage2Item,
    generate,
    load_pipeline,
    save_pipeline,
    train_stage2,
)
from .vqvae import read_motion, train_stage1, write_motion

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lsf",
        description="Speech-feature-to-facial-animation pipeline on synthetic data.",
    )
    parser.add_argument(
        "--dump-defaults",
        action="store_true",
        help="print the default JSON config and exit",
    )
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("synth-corpus", help="generate the synthetic corpus plus blendshape model")
    p.add_argument("--config", required=True, help="JSON run config")
    p.add_argument("--out", required=True, help="output corpus directory")

    p = sub.add_parser("train-vqvae", help="stage 1: train the motion autoencoder")
    p.add_argument("--config", required=True)
    p.add_argument("--corpus", required=True, help="corpus directory")
    p.add_argument("--out", required=True, help="output LSFC checkpoint path")

    p = sub.add_parser("train-encoder", help="stage 2: train the feature-to-latent encoder")
    p.add_argument("--config", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--vqvae", required=True, help="stage-1 LSFC checkpoint")
    p.add_argument("--out", required=True, help="output pipeline LSFC checkpoint path")

    p = sub.add_parser("generate", help="sample motion sequences for one corpus item")
    p.add_argument("--config", required=True)
    p.add_argument("--ckpt", required=True, help="pipeline LSFC checkpoint")
    p.add_argument("--corpus", required=True)
    p.add_argument("--item", required=True, help="corpus item key")
    p.add_argument("--samples", type=int, default=1)
    p.add_argument("--temp", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory for LSFM samples")

    p = sub.add_parser("eval", help="score predictions against corpus ground truth")
    p.add_argument("--pred", required=True, help="directory of <item>_s<k>.lsfm files")
    p.add_argument("--corpus", required=True)
    p.add_argument("--blendshape", required=True, help="LSFB blendshape model")
    p.add_argument("--lip-mask", default=None, help="lip mask JSON (default: masks/lip.json beside the model)")
    p.add_argument("--upper-mask", default=None, help="upper-face mask JSON")
    p.add_argument("--fdd-mode", choices=["abs", "signed"], default="abs")
    p.add_argument("--report", required=True, help="output JSON report path")

    p = sub.add_parser("heatmap", help="per-vertex adjacent-frame motion statistics as CSV")
    p.add_argument("--seq", required=True, help="LSFM motion sequence")
    p.add_argument("--blendshape", required=True)
    p.add_argument("--shape", required=True, help="LSFS neutral shape")
    p.add_argument("--out", required=True, help="output CSV path")

    return parser


def cmd_synth_corpus(args) -> int:
    cfg = load_config(args.config)
    out = Path(args.out)
    corpus = synth_corpus(cfg.seed, cfg.corpus_config())
    write_corpus(corpus, out)
    model, masks = flame.synth_model(derive_seed("blendshape", cfg.seed), cfg.n_vertices)
    flame.write_model(out / "blendshape.lsfb", model)
    (out / "masks").mkdir(exist_ok=True)
    flame.write_mask(out / "masks" / "lip.json", masks["lip"])
    flame.write_mask(out / "masks" / "upper_face.json", masks["upper_face"])
    print(f"corpus: {len(corpus.items)} items, {len(corpus.subjects)} subjects -> {out}")
    return EXIT_OK


def cmd_train_vqvae(args) -> int:
    cfg = load_config(args.config)
    corpus = read_corpus(args.corpus)
    train_items = [it.motion_gt for it in corpus.items_for_split("train")]
    val_items = [it.motion_gt for it in corpus.items_for_split("val")]
    arrays, log = train_stage1(train_items, val_items, cfg.stage1_config())
    out = Path(args.out)
    write_checkpoint(out, arrays)
    out.with_suffix(out.suffix + ".log.json").write_text(log.to_json(), encoding="utf-8")
    print(f"stage-1 best epoch {log.best_epoch}, val loss {log.best_val_loss:.6g} -> {out}")
    return EXIT_OK


def _stage2_items(corpus, split: str, fps: int) -> list[Stage2Item]:
    items = []
    for it in corpus.items_for_split(split):
        items.append(
            Stage2Item(
                key=it.key,
                m25=align_to_fps(it.motion_features, fps),
                e25=align_to_fps(it.emotion_features, fps),
                shape=corpus.subject_by_id(it.subject_id).shape,
                gt=it.motion_gt,
            )
        )
    return items


def cmd_train_encoder(args) -> int:
    cfg = load_config(args.config)
    corpus = read_corpus(args.corpus)
    stage1_arrays = read_checkpoint(args.vqvae)
    s2cfg = cfg.stage2_config()
    train_items = _stage2_items(corpus, "train", s2cfg.fps)
    val_items = _stage2_items(corpus, "val", s2cfg.fps)
    ckpt, log = train_stage2(train_items, val_items, stage1_arrays, s2cfg)
    out = Path(args.out)
    save_pipeline(out, ckpt)
    out.with_suffix(out.suffix + ".log.json").write_text(log.to_json(), encoding="utf-8")
    print(f"stage-2 best epoch {log.best_epoch}, val loss {log.best_val_loss:.6g} -> {out}")
    return EXIT_OK


def cmd_generate(args) -> int:
    cfg = load_config(args.config)
    corpus = read_corpus(args.corpus)
    item = corpus.item_by_key(args.item)
    ckpt = load_pipeline(args.ckpt)
    sampler = SamplerConfig(temperature=args.temp, n_samples=args.samples, seed=args.seed)
    shape = corpus.subject_by_id(item.subject_id).shape
    samples = generate(item.motion_features, item.emotion_features, shape, ckpt, sampler, cfg.stage2_config())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for k, motion in enumerate(samples):
        write_motion(out / f"{item.key}_s{k}.lsfm", motion)
    print(f"wrote {len(samples)} samples for {item.key} -> {out}")
    return EXIT_OK


def _load_masks(args) -> tuple[flame.RegionMask, flame.RegionMask]:
    base = Path(args.blendshape).parent / "masks"
    lip_path = Path(args.lip_mask) if args.lip_mask else base / "lip.json"
    upper_path = Path(args.upper_mask) if args.upper_mask else base / "upper_face.json"
    for path in (lip_path, upper_path):
        if not path.exists():
            raise IntegrityError(f"mask file not found: {path}")
    return flame.read_mask(lip_path), flame.read_mask(upper_path)


def cmd_eval(args) -> int:
    corpus = read_corpus(args.corpus)
    model = flame.read_model(args.blendshape)
    lip_mask, upper_mask = _load_masks(args)
    lip_mask.validate(model.n_vertices)
    upper_mask.validate(model.n_vertices)
    pred_dir = Path(args.pred)
    groups: dict[str, list[Path]] = {}
    for path in sorted(pred_dir.glob("*_s*.lsfm")):
        key, _, tail = path.stem.rpartition("_s")
        if not key or not tail.isdigit():
            continue
        groups.setdefault(key, []).append(path)
    if not groups:
        raise IntegrityError(f"no <item>_s<k>.lsfm predictions found under {pred_dir}")
    eval_items = []
    for key in sorted(groups):
        item = corpus.item_by_key(key)
        shape = corpus.subject_by_id(item.subject_id).shape
        gt_vertices = flame.decode_sequence(model, shape, item.motion_gt.frames)
        preds = []
        for path in sorted(groups[key], key=lambda p: int(p.stem.rpartition("_s")[2])):
            motion = read_motion(path)
            if motion.fps != item.motion_gt.fps:
                raise IntegrityError(
                    f"{path}: fps {motion.fps} != ground truth fps {item.motion_gt.fps}"
                )
            if motion.n_frames != item.motion_gt.n_frames:
                raise IntegrityError(
                    f"{path}: {motion.n_frames} frames != ground truth {item.motion_gt.n_frames}"
                )
            preds.append(flame.decode_sequence(model, shape, motion.frames))
        eval_items.append(
            metrics.EvalItem(
                gt=gt_vertices,
                preds=preds,
                lip_mask=lip_mask,
                upper_mask=upper_mask,
                template=model.template,
                name=key,
            )
        )
    report = metrics.evaluate_corpus(eval_items, fdd_mode=args.fdd_mode)
    Path(args.report).write_text(report.to_json(), encoding="utf-8")
    print(
        f"evaluated {len(eval_items)} items: mve={report.mve:.4f} lve={report.lve:.4f} "
        f"fdd={report.fdd:.4f} mee={report.mee:.4f} ce={report.ce:.4f} diversity={report.diversity:.4f}"
    )
    return EXIT_OK


def cmd_heatmap(args) -> int:
    motion = read_motion(args.seq)
    model = flame.read_model(args.blendshape)
    shape = flame.read_shape(args.shape)
    vertices = flame.decode_sequence(model, shape, motion.frames)
    Path(args.out).write_text(metrics.heatmap_csv(vertices), encoding="utf-8")
    print(f"heatmap stats for {motion.n_frames} frames -> {args.out}")
    return EXIT_OK


_COMMANDS = {
    "synth-corpus": cmd_synth_corpus,
    "train-vqvae": cmd_train_vqvae,
    "train-encoder": cmd_train_encoder,
    "generate": cmd_generate,
    "eval": cmd_eval,
    "heatmap": cmd_heatmap,
}


def run(argv: list[str]) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.dump_defaults:
        print(json.dumps(default_config(), sort_keys=True, indent=2))
        return EXIT_OK
    if args.command is None:
        parser.print_help()
        return EXIT_CONFIG
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IntegrityError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NonFiniteError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main() -> int:
    return run(sys.argv[1:])
