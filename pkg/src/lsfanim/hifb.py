"""Fusion-token encoder coupling the motion and emotion streams.

Both streams are first projected to a shared width and scaled element-wise by
a style vector derived from the identity embedding.  A set of learnable
fusion tokens is then threaded through L layers: at each layer the tokens are
concatenated above each stream and pushed through that stream's own
transformer block (token rows dropped afterwards), and the tokens themselves
are updated by cross-attending over the Cartesian product of all
(motion frame i, emotion frame j) pairs, each pair being the concatenation of
the two frame vectors.  The final motion stream is the output.

Sinusoidal positional encodings are added to both streams right after
modulation (here and in the baselines): attention is permutation-equivariant,
so without positions the fusion output would be exactly invariant to
reordering a stream's frames and temporal alignment between the streams
would be unlearnable.  Note the fusion tokens mediate with a one-layer lag
(layer l streams read tokens from layer l-1), so the emotion stream can only
influence the motion output when there are at least two layers.

Two late-fusion baselines are included for ablations: a sigmoid-gated blend
and a single cross-attention read, both applied after independent per-stream
encoders.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .blocks import (
    add_positions,
    attention_forward,
    ffn_forward,
    init_attention,
    init_ffn,
    init_layer_norm,
    init_linear,
    init_transformer_block,
    layer_norm_forward,
    linear_forward,
    transformer_block_forward,
)
from .errors import ConfigError, InputError, ShapeError
from .params import ParamStore, uniform_init
from .tensor import Tensor


@dataclass
class HifbConfig:
    layers: int = 2
    heads: int = 4
    d: int = 32
    n_f: int = 8
    pair_band: int | None = None   # None = full Cartesian product

    def validate(self) -> None:
        if self.layers < 1:
            raise ConfigError(f"hifb needs at least one layer, got {self.layers}")
        if self.d % self.heads != 0:
            raise ConfigError(f"width {self.d} not divisible by heads {self.heads}")
        if self.n_f < 1:
            raise ConfigError(f"need at least one fusion token, got {self.n_f}")
        if self.pair_band is not None and self.pair_band < 0:
            raise ConfigError(f"pair band must be >= 0 or None, got {self.pair_band}")


def init_style_modulator(store: ParamStore, d_id: int, d_m: int, d_e: int, d: int, rng: np.random.Generator) -> None:
    """Projection matrices for style modulation; deliberately bias-free."""
    store.add("mod.w_style", uniform_init(rng, d_id, (d_id, d)))
    store.add("mod.w_m", uniform_init(rng, d_m, (d_m, d)))
    store.add("mod.w_e", uniform_init(rng, d_e, (d_e, d)))


def modulate(store: ParamStore, m: Tensor, e: Tensor, z_id: Tensor) -> tuple[Tensor, Tensor]:
    """Project both streams to width d and scale each frame by the style vector."""
    if m.data.shape[0] != e.data.shape[0]:
        raise ShapeError(
            f"stream length mismatch: motion T={m.data.shape[0]}, emotion T={e.data.shape[0]}"
        )
    s_id = T.matmul(z_id, store["mod.w_style"])        # (1, d), broadcasts over frames
    m_tilde = T.mul(T.matmul(m, store["mod.w_m"]), s_id)
    e_tilde = T.mul(T.matmul(e, store["mod.w_e"]), s_id)
    return m_tilde, e_tilde


def init_hifb(store: ParamStore, cfg: HifbConfig, rng: np.random.Generator) -> None:
    cfg.validate()
    store.add("hifb.tokens", uniform_init(rng, cfg.d, (cfg.n_f, cfg.d)))
    for layer in range(cfg.layers):
        init_transformer_block(store, f"hifb.l{layer}.m", cfg.d, rng)
        init_transformer_block(store, f"hifb.l{layer}.e", cfg.d, rng)
        init_linear(store, f"hifb.l{layer}.kv", 2 * cfg.d, cfg.d, rng)
        init_layer_norm(store, f"hifb.l{layer}.fuse.ln1", cfg.d)
        init_attention(store, f"hifb.l{layer}.fuse.attn", cfg.d, rng)
        init_layer_norm(store, f"hifb.l{layer}.fuse.ln2", cfg.d)
        init_ffn(store, f"hifb.l{layer}.fuse.ffn", cfg.d, rng)


def stream_update(store: ParamStore, prefix: str, tokens: Tensor, stream: Tensor, heads: int) -> Tensor:
    """Run one stream's transformer block over [tokens; stream] rows.

    Tokens sit above the frame rows during attention and are dropped from the
    output, so the result is exactly (T, d) again.
    """
    if tokens.data.shape[1] != stream.data.shape[1]:
        raise ShapeError(
            f"token width {tokens.data.shape[1]} != stream width {stream.data.shape[1]}"
        )
    n_f = tokens.data.shape[0]
    joint = T.concat_rows([tokens, stream])
    out = transformer_block_forward(store, prefix, joint, heads)
    return T.slice_rows(out, n_f, n_f + stream.data.shape[0])


def pair_indices(t: int, band: int | None) -> tuple[np.ndarray, np.ndarray]:
    """Index arrays for all (i, j) pairs with |i - j| <= band, i-major order."""
    if band is None:
        return np.repeat(np.arange(t), t), np.tile(np.arange(t), t)
    i_parts = []
    j_parts = []
    for i in range(t):
        lo, hi = max(0, i - band), min(t - 1, i + band)
        j_parts.append(np.arange(lo, hi + 1))
        i_parts.append(np.full(hi - lo + 1, i))
    return np.concatenate(i_parts), np.concatenate(j_parts)


def pair_count(t: int, band: int | None) -> int:
    """Closed-form row count of the pair table."""
    if band is None:
        return t * t
    return sum(min(t - 1, i + band) - max(0, i - band) + 1 for i in range(t))


def pair_table(m: Tensor, e: Tensor, band: int | None = None) -> Tensor:
    """(P, 2d) matrix of concatenated stream-frame pairs."""
    if m.data.shape[0] != e.data.shape[0]:
        raise ShapeError("pair_table needs equal stream lengths")
    i_idx, j_idx = pair_indices(m.data.shape[0], band)
    return T.pair_concat(m, e, i_idx, j_idx)


def fusion_update(store: ParamStore, prefix: str, tokens: Tensor, pairs: Tensor, heads: int) -> Tensor:
    """Update fusion tokens by cross-attending over projected pair rows."""
    kv = linear_forward(store, f"{prefix}.kv", pairs)
    q = layer_norm_forward(store, f"{prefix}.fuse.ln1", tokens)
    tokens = T.add(tokens, attention_forward(store, f"{prefix}.fuse.attn", q, kv, kv, heads))
    h = layer_norm_forward(store, f"{prefix}.fuse.ln2", tokens)
    return T.add(tokens, ffn_forward(store, f"{prefix}.fuse.ffn", h))


def hifb_forward(store: ParamStore, m: Tensor, e: Tensor, z_id: Tensor, cfg: HifbConfig) -> Tensor:
    """Full fusion stack: modulate once, then L interaction layers.

    Returns the motion stream after the last layer, shape (T, d).
    """
    cfg.validate()
    if m.data.shape[0] == 0:
        raise InputError("hifb_forward needs at least one frame")
    m_tilde, e_tilde = modulate(store, m, e, z_id)
    m_tilde = add_positions(m_tilde)
    e_tilde = add_positions(e_tilde)
    tokens = store["hifb.tokens"]
    for layer in range(cfg.layers):
        prefix = f"hifb.l{layer}"
        m_tilde = stream_update(store, f"{prefix}.m", tokens, m_tilde, cfg.heads)
        e_tilde = stream_update(store, f"{prefix}.e", tokens, e_tilde, cfg.heads)
        pairs = pair_table(m_tilde, e_tilde, cfg.pair_band)
        tokens = fusion_update(store, prefix, tokens, pairs, cfg.heads)
    return m_tilde


def init_gate_fusion(store: ParamStore, cfg: HifbConfig, rng: np.random.Generator) -> None:
    cfg.validate()
    for layer in range(cfg.layers):
        init_transformer_block(store, f"gate.m.block{layer}", cfg.d, rng)
        init_transformer_block(store, f"gate.e.block{layer}", cfg.d, rng)
    init_linear(store, "gate.g", 2 * cfg.d, cfg.d, rng)


def gate_fusion(store: ParamStore, m: Tensor, e: Tensor, z_id: Tensor, cfg: HifbConfig) -> Tensor:
    """Late fusion baseline: sigmoid gate blending independently encoded streams."""
    if m.data.shape[0] == 0:
        raise InputError("gate_fusion needs at least one frame")
    m_tilde, e_tilde = modulate(store, m, e, z_id)
    m_tilde = add_positions(m_tilde)
    e_tilde = add_positions(e_tilde)
    for layer in range(cfg.layers):
        m_tilde = transformer_block_forward(store, f"gate.m.block{layer}", m_tilde, cfg.heads)
        e_tilde = transformer_block_forward(store, f"gate.e.block{layer}", e_tilde, cfg.heads)
    g = T.sigmoid(linear_forward(store, "gate.g", T.concat_cols([m_tilde, e_tilde])))
    one_minus = T.sub(Tensor(np.ones_like(g.data)), g)
    return T.add(T.mul(g, m_tilde), T.mul(one_minus, e_tilde))


def init_xattn_late_fusion(store: ParamStore, cfg: HifbConfig, rng: np.random.Generator) -> None:
    cfg.validate()
    for layer in range(cfg.layers):
        init_transformer_block(store, f"xl.m.block{layer}", cfg.d, rng)
        init_transformer_block(store, f"xl.e.block{layer}", cfg.d, rng)
    init_layer_norm(store, "xl.ln", cfg.d)
    init_attention(store, "xl.attn", cfg.d, rng)


def xattn_late_fusion(store: ParamStore, m: Tensor, e: Tensor, z_id: Tensor, cfg: HifbConfig) -> Tensor:
    """Late fusion baseline: motion stream cross-attends to the emotion stream once."""
    if m.data.shape[0] == 0:
        raise InputError("xattn_late_fusion needs at least one frame")
    m_tilde, e_tilde = modulate(store, m, e, z_id)
    m_tilde = add_positions(m_tilde)
    e_tilde = add_positions(e_tilde)
    for layer in range(cfg.layers):
        m_tilde = transformer_block_forward(store, f"xl.m.block{layer}", m_tilde, cfg.heads)
        e_tilde = transformer_block_forward(store, f"xl.e.block{layer}", e_tilde, cfg.heads)
    q = layer_norm_forward(store, "xl.ln", m_tilde)
    return T.add(m_tilde, attention_forward(store, "xl.attn", q, e_tilde, e_tilde, cfg.heads))
