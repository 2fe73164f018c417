"""Stage 1: the VQ-VAE motion codebook.

The autoencoder learns a discrete latent space of facial motion: each latent
frame snaps to its nearest codebook row (ties to the lowest index) and the
decoder reconstructs parameter frames from those codes.  Gradients reach the
encoder through the straight-through estimator.
"""

import numpy as np

from lsfanim import CorpusConfig, Stage1Config, synth_corpus
from lsfanim.params import ParamStore, init_rng
from lsfanim.tensor import Tensor
from lsfanim.vqvae import (
    LatentSequence,
    encode,
    init_vqvae,
    nearest_codes,
    quantize,
    stage1_loss,
    train_stage1,
)

cfg = CorpusConfig(
    n_subjects=4, sentences_per_cell=1, neutral_sentences=0,
    t_min=32, t_max=32, split_ratios=(0.5, 0.25, 0.25),
)
corpus = synth_corpus(seed=5, cfg=cfg)
items = [it.motion_gt for it in corpus.items][:6]
print(f"toy set: {len(items)} sequences of {items[0].n_frames} frames")

# ---------------------------------------------------------------------------
# Quantization mechanics on a hand-made codebook.
# ---------------------------------------------------------------------------
book = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0]], dtype=np.float32)
latents = LatentSequence(np.array([[0.9, 0.9], [0.5, 0.5], [0.1, 0.8]], dtype=np.float32))
snapped, idx = quantize(latents, book)
print(f"codes chosen: {idx.tolist()}  (0.5,0.5 ties between rows 0 and 1 -> lowest index wins)")

# ---------------------------------------------------------------------------
# A short training run; watch reconstruction and codebook usage.
# ---------------------------------------------------------------------------
s1 = Stage1Config(codebook_size=64, batch_size=6, max_epochs=10**6, max_steps=600, patience=None, seed=0)
arrays, log = train_stage1(items, [], s1)
print(f"training loss: {log.epochs[0]['train_loss']:.4f} -> {log.epochs[-1]['train_loss']:.4f} "
      f"over {log.epochs[-1]['steps']} steps")

store = ParamStore()
init_vqvae(store, s1.latent_dim, s1.codebook_size, init_rng(s1.seed))
store.load_arrays(arrays)

used = set()
for item in items:
    total, parts = stage1_loss(store, item, s1.heads)
    z = encode(store, Tensor(item.frames), s1.heads)
    idx, _ = nearest_codes(z.data, store["vq.codebook"].data)
    used.update(idx.tolist())
print(f"last item loss parts: reconstruction={parts['reconstruction']:.2e} "
      f"codebook={parts['codebook']:.2e} commitment={parts['commitment']:.2e}")
print(f"codebook usage across the toy set: {len(used)}/{s1.codebook_size} codes "
      f"({len(used)/s1.codebook_size:.0%})")
