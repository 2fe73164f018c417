"""End-to-end run at toy scale: corpus -> stage 1 -> stage 2 -> samples -> metrics.

This is the whole pipeline in one script (the `lsf` CLI wraps exactly these
calls).  Expect a couple of minutes of numpy crunching.
"""

import numpy as np

from lsfanim import (
    CorpusConfig,
    EvalItem,
    SamplerConfig,
    Stage1Config,
    Stage2Config,
    Stage2Item,
    evaluate_corpus,
    generate,
    synth_corpus,
    synth_model,
    train_stage1,
    train_stage2,
)
from lsfanim.features import align_to_fps, derive_seed
from lsfanim.flame import decode_sequence

SEED = 13

corpus_cfg = CorpusConfig(
    n_subjects=4, sentences_per_cell=2, neutral_sentences=1,
    t_min=30, t_max=48, split_ratios=(0.5, 0.25, 0.25),
)
corpus = synth_corpus(seed=SEED, cfg=corpus_cfg)
model, masks = synth_model(seed=derive_seed("blendshape", SEED), n_vertices=45)
print(f"corpus: {len(corpus.items)} items, split "
      f"{ {k: len(v) for k, v in corpus.split.items()} }")

# Stage 1: motion codebook on the training split.
s1cfg = Stage1Config(codebook_size=128, batch_size=8, max_epochs=10**6,
                     max_steps=800, patience=None, seed=SEED)
stage1_arrays, s1log = train_stage1(
    [it.motion_gt for it in corpus.items_for_split("train")],
    [it.motion_gt for it in corpus.items_for_split("val")],
    s1cfg,
)
print(f"stage 1: train loss {s1log.epochs[0]['train_loss']:.3f} -> "
      f"{s1log.epochs[-1]['train_loss']:.4f}")


def stage2_items(split):
    out = []
    for it in corpus.items_for_split(split):
        out.append(Stage2Item(
            key=it.key,
            m25=align_to_fps(it.motion_features, corpus_cfg.fps),
            e25=align_to_fps(it.emotion_features, corpus_cfg.fps),
            shape=corpus.subject_by_id(it.subject_id).shape,
            gt=it.motion_gt,
        ))
    return out


# Stage 2: the label-free encoder against the frozen codebook.
s2cfg = Stage2Config(lr=1e-4, batch_size=8, max_epochs=10**6,
                     max_steps=500, patience=None, seed=SEED)
ckpt, s2log = train_stage2(stage2_items("train"), stage2_items("val"), stage1_arrays, s2cfg)
print(f"stage 2: train loss {s2log.epochs[0]['train_loss']:.3f} -> "
      f"{s2log.epochs[-1]['train_loss']:.4f}")

# Generation for an unseen (test-split) subject: identity comes only from the
# neutral shape, emotion only from the speech features.
eval_items = []
for item in stage2_items("test"):
    deterministic = generate(item.m25, item.e25, item.shape, ckpt,
                             SamplerConfig(temperature=0.0, n_samples=1, seed=SEED), s2cfg)
    stochastic = generate(item.m25, item.e25, item.shape, ckpt,
                          SamplerConfig(temperature=1.0, n_samples=5, seed=SEED), s2cfg)
    preds = [decode_sequence(model, item.shape, s.frames) for s in deterministic + stochastic]
    eval_items.append(EvalItem(
        gt=decode_sequence(model, item.shape, item.gt.frames),
        preds=preds,
        lip_mask=masks["lip"],
        upper_mask=masks["upper_face"],
        template=model.template,
        name=item.key,
    ))

report = evaluate_corpus(eval_items)
print("test-split metrics (mm):")
for key in ("mve", "lve", "fdd", "mee", "ce", "diversity"):
    print(f"  {key:10s} {getattr(report, key):.4f}")
