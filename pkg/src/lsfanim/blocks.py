"""Reusable network pieces: linear layers, MLPs, and pre-LN transformer blocks.

Each piece comes as an ``init_*`` function that registers parameters under a
name prefix and a matching forward function that reads them back.  Weights
are uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)); biases start at zero; layer
norm starts at identity.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .params import ParamStore, uniform_init
from .tensor import Tensor


def init_linear(store: ParamStore, prefix: str, d_in: int, d_out: int, rng: np.random.Generator) -> None:
    store.add(f"{prefix}.w", uniform_init(rng, d_in, (d_in, d_out)))
    store.add(f"{prefix}.b", np.zeros(d_out))


def linear_forward(store: ParamStore, prefix: str, x: Tensor) -> Tensor:
    return T.linear(x, store[f"{prefix}.w"], store[f"{prefix}.b"])


def init_layer_norm(store: ParamStore, prefix: str, d: int) -> None:
    store.add(f"{prefix}.gamma", np.ones(d))
    store.add(f"{prefix}.beta", np.zeros(d))


def layer_norm_forward(store: ParamStore, prefix: str, x: Tensor) -> Tensor:
    return T.layer_norm(x, store[f"{prefix}.gamma"], store[f"{prefix}.beta"])


def init_attention(store: ParamStore, prefix: str, d: int, rng: np.random.Generator) -> None:
    for name in ("wq", "wk", "wv", "wo"):
        store.add(f"{prefix}.{name}", uniform_init(rng, d, (d, d)))
    for name in ("bq", "bk", "bv", "bo"):
        store.add(f"{prefix}.{name}", np.zeros(d))


def attention_forward(
    store: ParamStore,
    prefix: str,
    q: Tensor,
    k: Tensor,
    v: Tensor,
    heads: int,
    return_weights: bool = False,
):
    return T.multi_head_attention(
        q, k, v, heads,
        store[f"{prefix}.wq"], store[f"{prefix}.bq"],
        store[f"{prefix}.wk"], store[f"{prefix}.bk"],
        store[f"{prefix}.wv"], store[f"{prefix}.bv"],
        store[f"{prefix}.wo"], store[f"{prefix}.bo"],
        return_weights=return_weights,
    )


def init_ffn(store: ParamStore, prefix: str, d: int, rng: np.random.Generator, mult: int = 2) -> None:
    init_linear(store, f"{prefix}.fc1", d, mult * d, rng)
    init_linear(store, f"{prefix}.fc2", mult * d, d, rng)


def ffn_forward(store: ParamStore, prefix: str, x: Tensor) -> Tensor:
    h = T.relu(linear_forward(store, f"{prefix}.fc1", x))
    return linear_forward(store, f"{prefix}.fc2", h)


def init_transformer_block(store: ParamStore, prefix: str, d: int, rng: np.random.Generator) -> None:
    init_layer_norm(store, f"{prefix}.ln1", d)
    init_attention(store, f"{prefix}.attn", d, rng)
    init_layer_norm(store, f"{prefix}.ln2", d)
    init_ffn(store, f"{prefix}.ffn", d, rng)


def transformer_block_forward(store: ParamStore, prefix: str, x: Tensor, heads: int) -> Tensor:
    """Pre-LN block: x + MHA(LN(x)) followed by x + FFN(LN(x))."""
    h = layer_norm_forward(store, f"{prefix}.ln1", x)
    x = T.add(x, attention_forward(store, f"{prefix}.attn", h, h, h, heads))
    h = layer_norm_forward(store, f"{prefix}.ln2", x)
    return T.add(x, ffn_forward(store, f"{prefix}.ffn", h))


def positional_encoding(t: int, d: int) -> np.ndarray:
    """Standard sinusoidal position table, shape (t, d)."""
    position = np.arange(t, dtype=np.float64)[:, None]
    div = np.exp(np.arange(0, d, 2, dtype=np.float64) * (-np.log(10000.0) / d))
    pe = np.zeros((t, d), dtype=np.float64)
    pe[:, 0::2] = np.sin(position * div)
    pe[:, 1::2] = np.cos(position * div[: pe[:, 1::2].shape[1]])
    return pe


def add_positions(x: Tensor) -> Tensor:
    """x + sinusoidal positions; gives attention temporal addressability."""
    t, d = x.data.shape
    return T.add(x, Tensor(positional_encoding(t, d).astype(x.data.dtype)))


def init_mlp(store: ParamStore, prefix: str, dims: list[int], rng: np.random.Generator) -> None:
    """Chain of linear layers with ReLU between; dims = [in, hidden..., out]."""
    for i in range(len(dims) - 1):
        init_linear(store, f"{prefix}.fc{i}", dims[i], dims[i + 1], rng)


def mlp_forward(store: ParamStore, prefix: str, x: Tensor, n_layers: int) -> Tensor:
    for i in range(n_layers):
        x = linear_forward(store, f"{prefix}.fc{i}", x)
        if i < n_layers - 1:
            x = T.relu(x)
    return x
