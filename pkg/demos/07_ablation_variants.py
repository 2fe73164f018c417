"""A miniature ablation run: representation and fusion variants side by side.

Every variant trains from the same frozen stage-1 checkpoint with the same
budget; the report records content hashes so that is checkable.  The
"no-style" variant is instrumented proof of the label-free claim: its access
counters show it never reads the emotion stream or the identity shape.
"""

from lsfanim import CorpusConfig, Stage1Config, VariantSpec, run_ablation, synth_corpus, synth_model
from lsfanim.hifb import HifbConfig
from lsfanim.pipeline import Stage2Config
from lsfanim.vqvae import train_stage1

corpus = synth_corpus(seed=4, cfg=CorpusConfig(
    n_subjects=4, sentences_per_cell=1, neutral_sentences=1,
    t_min=25, t_max=40, split_ratios=(0.5, 0.25, 0.25),
))
model, masks = synth_model(seed=4, n_vertices=30)

stage1_arrays, _ = train_stage1(
    [it.motion_gt for it in corpus.items_for_split("train")], [],
    Stage1Config(codebook_size=64, batch_size=8, max_epochs=10**6, max_steps=300, patience=None, seed=0),
)

variants = [
    VariantSpec("no-style", "no-style", "style-vector"),
    VariantSpec("emotion+iden-style", "emotion+identity", "style-vector"),
    VariantSpec("gate", "emotion+identity", "gate"),
    VariantSpec("hifb", "emotion+identity", "hifb"),
]

report = run_ablation(
    corpus, stage1_arrays, variants, seeds=[0, 1],
    cfg=Stage2Config(lr=3e-4, batch_size=4, max_epochs=10**6, max_steps=40, patience=None),
    model=model, lip_mask=masks["lip"], upper_mask=masks["upper_face"],
    n_samples=2, temperature=1.0,
)

print(f"stage-1 hash: {report.header['stage1_hash'][:16]}...  "
      f"corpus hash: {report.header['corpus_hash'][:16]}...")
print()
print(report.to_csv())
print("input access counters (reads during training + evaluation):")
for name, counts in sorted(report.access_counts.items()):
    print(f"  {name:20s} emotion={counts['emotion']:5d}  identity={counts['identity']:5d}")
