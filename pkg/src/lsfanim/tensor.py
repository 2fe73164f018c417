"""Dense row-major tensors with reverse-mode automatic differentiation.

Every operation builds a node in an implicit tape; calling ``backward()`` on a
scalar walks the tape in reverse topological order and accumulates gradients
into the leaves.  Tensors are float32 by default; float64 exists for
finite-difference gradient checking, where float32 rounding would swamp the
comparison.  Every operation verifies its output is finite and raises
NonFiniteError otherwise.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import NonFiniteError, ShapeError

_ALLOWED_DTYPES = (np.float32, np.float64)


def _check_finite(arr: np.ndarray, ctx: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite values produced by {ctx}")


class Tensor:
    """A dense array plus the bookkeeping needed for backpropagation.

    ``data`` is always C-contiguous (row-major).  ``grad`` is lazily allocated
    with the same shape; leaves created through ParamStore keep a persistent
    zeroed gradient slot instead.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.ascontiguousarray(data, dtype=dtype)
        if arr.dtype not in _ALLOWED_DTYPES:
            arr = arr.astype(np.float32)
        _check_finite(arr, "tensor construction")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self._op = "leaf"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, op={self._op})"

    def detach(self) -> "Tensor":
        """Copy of this tensor cut out of the autodiff graph (stop-gradient)."""
        return Tensor(self.data.copy())

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self) -> None:
        """Backpropagate from a scalar output to every reachable leaf."""
        if self.data.size != 1:
            raise ShapeError(f"backward() requires a scalar, got shape {self.data.shape}")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen and p.requires_grad:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # Operator sugar; the functional forms below do the work.
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul(self, -1.0)


def _result(data: np.ndarray, parents: Sequence[Tensor], backward, op: str) -> Tensor:
    _check_finite(data, op)
    out = Tensor.__new__(Tensor)
    out.data = np.ascontiguousarray(data)
    out.grad = None
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = backward
    else:
        out._parents = ()
        out._backward = None
    out._op = op
    return out


def _as_tensor(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.dtype))


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient over the axes numpy broadcasting added or stretched."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def add(a: Tensor, b) -> Tensor:
    b = _as_tensor(b, a)
    data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g, b.data.shape))

    return _result(data, (a, b), backward, "add")


def sub(a: Tensor, b) -> Tensor:
    b = _as_tensor(b, a)
    data = a.data - b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b.accumulate_grad(-_unbroadcast(g, b.data.shape))

    return _result(data, (a, b), backward, "sub")


def mul(a: Tensor, b) -> Tensor:
    b = _as_tensor(b, a)
    data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g * a.data, b.data.shape))

    return _result(data, (a, b), backward, "mul")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.data.shape} @ {b.data.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul inner dims differ: {a.data.shape} @ {b.data.shape}")
    data = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g @ b.data.T)
        if b.requires_grad:
            b.accumulate_grad(a.data.T @ g)

    return _result(data, (a, b), backward, "matmul")


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError("transpose expects a 2-D tensor")
    data = a.data.T

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g.T)

    return _result(data, (a,), backward, "transpose")


def relu(a: Tensor) -> Tensor:
    data = np.maximum(a.data, 0)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g * (a.data > 0))

    return _result(data, (a,), backward, "relu")


def sigmoid(a: Tensor) -> Tensor:
    # Split by sign so exp never overflows.
    x = a.data
    data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    data = data.astype(x.dtype)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g * data * (1.0 - data))

    return _result(data, (a,), backward, "sigmoid")


def softmax_rows(a: Tensor) -> Tensor:
    """Softmax over the last axis of a 2-D tensor; rows sum to one."""
    if a.data.ndim != 2:
        raise ShapeError("softmax_rows expects a 2-D tensor")
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=1, keepdims=True)

    def backward(g):
        if a.requires_grad:
            dot = (g * data).sum(axis=1, keepdims=True)
            a.accumulate_grad(data * (g - dot))

    return _result(data, (a,), backward, "softmax_rows")


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Row-wise layer normalization with affine scale/shift.

    A constant row normalizes to zeros (variance epsilon keeps it finite).
    """
    if x.data.ndim != 2:
        raise ShapeError("layer_norm expects a 2-D tensor")
    d = x.data.shape[1]
    if gamma.data.shape != (d,) or beta.data.shape != (d,):
        raise ShapeError(f"layer_norm affine params must have shape ({d},)")
    mean = x.data.mean(axis=1, keepdims=True)
    var = x.data.var(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean) * inv
    data = xhat * gamma.data + beta.data

    def backward(g):
        if gamma.requires_grad:
            gamma.accumulate_grad((g * xhat).sum(axis=0))
        if beta.requires_grad:
            beta.accumulate_grad(g.sum(axis=0))
        if x.requires_grad:
            gx = g * gamma.data
            term = gx - gx.mean(axis=1, keepdims=True) - xhat * (gx * xhat).mean(axis=1, keepdims=True)
            x.accumulate_grad(term * inv)

    return _result(data, (x, gamma, beta), backward, "layer_norm")


def concat_rows(parts: Iterable[Tensor]) -> Tensor:
    parts = list(parts)
    if not parts:
        raise ShapeError("concat_rows needs at least one tensor")
    widths = {p.data.shape[1] for p in parts if p.data.ndim == 2}
    if any(p.data.ndim != 2 for p in parts) or len(widths) != 1:
        raise ShapeError("concat_rows expects 2-D tensors of equal width")
    data = np.concatenate([p.data for p in parts], axis=0)
    offsets = np.cumsum([0] + [p.data.shape[0] for p in parts])

    def backward(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                p.accumulate_grad(g[lo:hi])

    return _result(data, parts, backward, "concat_rows")


def concat_cols(parts: Iterable[Tensor]) -> Tensor:
    parts = list(parts)
    if not parts:
        raise ShapeError("concat_cols needs at least one tensor")
    heights = {p.data.shape[0] for p in parts if p.data.ndim == 2}
    if any(p.data.ndim != 2 for p in parts) or len(heights) != 1:
        raise ShapeError("concat_cols expects 2-D tensors of equal height")
    data = np.concatenate([p.data for p in parts], axis=1)
    offsets = np.cumsum([0] + [p.data.shape[1] for p in parts])

    def backward(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                p.accumulate_grad(g[:, lo:hi])

    return _result(data, parts, backward, "concat_cols")


def slice_rows(a: Tensor, start: int, stop: int) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError("slice_rows expects a 2-D tensor")
    data = a.data[start:stop]

    def backward(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            full[start:stop] = g
            a.accumulate_grad(full)

    return _result(data, (a,), backward, "slice_rows")


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError("slice_cols expects a 2-D tensor")
    data = a.data[:, start:stop]

    def backward(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            full[:, start:stop] = g
            a.accumulate_grad(full)

    return _result(data, (a,), backward, "slice_cols")


def gather_rows(a: Tensor, idx: np.ndarray) -> Tensor:
    """Select rows by integer index; backward scatter-adds into the source."""
    if a.data.ndim != 2:
        raise ShapeError("gather_rows expects a 2-D tensor")
    idx = np.asarray(idx, dtype=np.int64)
    data = a.data[idx]

    def backward(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            np.add.at(full, idx, g)
            a.accumulate_grad(full)

    return _result(data, (a,), backward, "gather_rows")


def sum_all(a: Tensor) -> Tensor:
    data = np.asarray(a.data.sum(), dtype=a.data.dtype)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(np.full_like(a.data, g))

    return _result(data, (a,), backward, "sum_all")


def mean_all(a: Tensor) -> Tensor:
    n = a.data.size
    if n == 0:
        raise ShapeError("mean_all of an empty tensor")
    data = np.asarray(a.data.mean(), dtype=a.data.dtype)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(np.full_like(a.data, g / n))

    return _result(data, (a,), backward, "mean_all")


def mean_rows(a: Tensor) -> Tensor:
    """Mean over rows of a 2-D tensor, kept as shape (1, d)."""
    if a.data.ndim != 2:
        raise ShapeError("mean_rows expects a 2-D tensor")
    t = a.data.shape[0]
    if t == 0:
        raise ShapeError("mean_rows of an empty tensor")
    data = a.data.mean(axis=0, keepdims=True)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(np.broadcast_to(g / t, a.data.shape).copy())

    return _result(data, (a,), backward, "mean_rows")


def pair_concat(m: Tensor, e: Tensor, i_idx: np.ndarray, j_idx: np.ndarray) -> Tensor:
    """Rows concat(m[i], e[j]) for paired index arrays, in the given order.

    The full-Cartesian case (i-major repeat/tile indices) gets a reshape-sum
    backward; arbitrary index sets fall back to scatter-add.
    """
    if m.data.ndim != 2 or e.data.ndim != 2:
        raise ShapeError("pair_concat expects 2-D tensors")
    t_m, d_m = m.data.shape
    t_e, d_e = e.data.shape
    i_idx = np.asarray(i_idx, dtype=np.int64)
    j_idx = np.asarray(j_idx, dtype=np.int64)
    data = np.concatenate([m.data[i_idx], e.data[j_idx]], axis=1)
    full_cartesian = (
        t_m == t_e
        and len(i_idx) == t_m * t_m
        and np.array_equal(i_idx, np.repeat(np.arange(t_m), t_m))
        and np.array_equal(j_idx, np.tile(np.arange(t_m), t_m))
    )

    def backward(g):
        gl = g[:, :d_m]
        gr = g[:, d_m:]
        if full_cartesian:
            if m.requires_grad:
                m.accumulate_grad(gl.reshape(t_m, t_m, d_m).sum(axis=1))
            if e.requires_grad:
                e.accumulate_grad(gr.reshape(t_m, t_m, d_e).sum(axis=0))
        else:
            if m.requires_grad:
                gm = np.zeros_like(m.data)
                np.add.at(gm, i_idx, gl)
                m.accumulate_grad(gm)
            if e.requires_grad:
                ge = np.zeros_like(e.data)
                np.add.at(ge, j_idx, gr)
                e.accumulate_grad(ge)

    return _result(data, (m, e), backward, "pair_concat")


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Affine map y = x @ w + b for a 2-D x of shape (*, in)."""
    if x.data.ndim != 2:
        raise ShapeError(f"linear expects 2-D input, got {x.data.shape}")
    if w.data.ndim != 2 or x.data.shape[1] != w.data.shape[0]:
        raise ShapeError(f"linear shape mismatch: {x.data.shape} @ {w.data.shape}")
    y = matmul(x, w)
    if b is not None:
        if b.data.shape != (w.data.shape[1],):
            raise ShapeError(f"linear bias must have shape ({w.data.shape[1]},)")
        y = add(y, b)
    return y


def mse(a: Tensor, b: Tensor) -> Tensor:
    """Mean squared error over all elements."""
    if a.data.shape != b.data.shape:
        raise ShapeError(f"mse shape mismatch: {a.data.shape} vs {b.data.shape}")
    d = sub(a, b)
    return mean_all(mul(d, d))


def scale(a: Tensor, s: float) -> Tensor:
    return mul(a, float(s))


def multi_head_attention(
    q: Tensor,
    k: Tensor,
    v: Tensor,
    heads: int,
    wq: Tensor,
    bq: Tensor,
    wk: Tensor,
    bk: Tensor,
    wv: Tensor,
    bv: Tensor,
    wo: Tensor,
    bo: Tensor,
    return_weights: bool = False,
):
    """Scaled dot-product attention with per-head projections, no masking.

    q is (Tq, d); k and v are (Tk, d).  Output is (Tq, d).  With
    ``return_weights`` the per-head attention matrices (heads, Tq, Tk) come
    back as a detached array for inspection.
    """
    from .errors import ConfigError

    d = q.data.shape[1]
    if d % heads != 0:
        raise ConfigError(f"model width {d} not divisible by heads={heads}")
    if k.data.shape[1] != d or v.data.shape[1] != d:
        raise ShapeError("q, k, v must share the model width")
    if k.data.shape[0] != v.data.shape[0]:
        raise ShapeError("k and v must have the same number of rows")
    dh = d // heads
    qp = linear(q, wq, bq)
    kp = linear(k, wk, bk)
    vp = linear(v, wv, bv)
    outs = []
    weights = []
    inv_sqrt = 1.0 / math.sqrt(dh)
    for h in range(heads):
        lo, hi = h * dh, (h + 1) * dh
        qh = slice_cols(qp, lo, hi)
        kh = slice_cols(kp, lo, hi)
        vh = slice_cols(vp, lo, hi)
        scores = scale(matmul(qh, transpose(kh)), inv_sqrt)
        probs = softmax_rows(scores)
        if return_weights:
            weights.append(probs.data.copy())
        outs.append(matmul(probs, vh))
    out = linear(concat_cols(outs), wo, bo)
    if return_weights:
        return out, np.stack(weights, axis=0)
    return out
