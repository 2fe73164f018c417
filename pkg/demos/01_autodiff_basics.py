"""Tour of the tensor kernel: forward ops, backward passes, gradient checking.

Everything in this project runs on a small reverse-mode autodiff over dense
numpy arrays.  This script builds a toy regression, backpropagates, and then
verifies the analytic gradients against central finite differences in
float64.
"""

import numpy as np

from lsfanim import ParamStore, Tensor, grad_check, init_rng
from lsfanim import tensor as T
from lsfanim.params import adam_step, uniform_init

rng = init_rng(0)

# ---------------------------------------------------------------------------
# A two-layer network written directly against the kernel ops.
# ---------------------------------------------------------------------------
store = ParamStore()
store.add("w1", uniform_init(rng, 4, (4, 8)))
store.add("b1", np.zeros(8))
store.add("w2", uniform_init(rng, 8, (8, 2)))
store.add("b2", np.zeros(2))

x = Tensor(rng.standard_normal((16, 4)).astype(np.float32))
target = Tensor(rng.standard_normal((16, 2)).astype(np.float32))


def forward():
    h = T.relu(T.linear(x, store["w1"], store["b1"]))
    return T.linear(h, store["w2"], store["b2"])


loss = T.mse(forward(), target)
print(f"initial loss: {loss.data.item():.4f}")

# One hundred Adam steps on the toy problem.
for step in range(100):
    store.zero_grad()
    T.mse(forward(), target).backward()
    adam_step(store, lr=0.01)
print(f"loss after 100 Adam steps: {T.mse(forward(), target).data.item():.4f}")

# ---------------------------------------------------------------------------
# Gradient checking runs in float64; float32 rounding would drown the signal.
# ---------------------------------------------------------------------------
store64 = store.to_double()
x64 = Tensor(x.data.astype(np.float64))
t64 = Tensor(target.data.astype(np.float64))


def forward64():
    h = T.relu(T.linear(x64, store64["w1"], store64["b1"]))
    return T.mse(T.linear(h, store64["w2"], store64["b2"]), t64)


report = grad_check(forward64, store64, tol=1e-4)
print(report)

# ---------------------------------------------------------------------------
# Attention is a first-class kernel op: rows of each head's attention matrix
# sum to one, and the whole thing is differentiable.
# ---------------------------------------------------------------------------
d, heads = 8, 2
attn = ParamStore()
for name in ("wq", "wk", "wv", "wo"):
    attn.add(name, uniform_init(rng, d, (d, d)))
for name in ("bq", "bk", "bv", "bo"):
    attn.add(name, np.zeros(d))

q = Tensor(rng.standard_normal((5, d)).astype(np.float32))
out, weights = T.multi_head_attention(
    q, q, q, heads,
    attn["wq"], attn["bq"], attn["wk"], attn["bk"],
    attn["wv"], attn["bv"], attn["wo"], attn["bo"],
    return_weights=True,
)
print(f"attention output shape: {out.data.shape}")
print(f"attention row sums (should all be 1): {weights.sum(axis=2).round(6).flatten()[:5]} ...")
