"""Named parameter store with gradient slots and Adam/AdamW state.

Names are unique and iteration is always lexicographic, so optimizer updates
and checkpoint serialization are order-deterministic.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, StateError
from .tensor import Tensor


def init_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def uniform_init(rng: np.random.Generator, fan_in: int, shape: tuple[int, ...]) -> np.ndarray:
    """Weights ~ uniform(-1/sqrt(fan_in), +1/sqrt(fan_in))."""
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class ParamStore:
    """Map from name to trainable Tensor, plus per-name optimizer moments."""

    def __init__(self, dtype=np.float32):
        if dtype not in (np.float32, np.float64):
            raise ConfigError("ParamStore dtype must be float32 or float64")
        self.dtype = np.dtype(dtype)
        self._params: dict[str, Tensor] = {}
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self.step = 0

    def add(self, name: str, array: np.ndarray) -> Tensor:
        if name in self._params:
            raise StateError(f"parameter {name!r} already registered")
        t = Tensor(np.asarray(array, dtype=self.dtype), requires_grad=True)
        t.grad = np.zeros_like(t.data)
        self._params[name] = t
        self._m[name] = np.zeros_like(t.data)
        self._v[name] = np.zeros_like(t.data)
        return t

    def __getitem__(self, name: str) -> Tensor:
        try:
            return self._params[name]
        except KeyError:
            raise StateError(f"parameter {name!r} not registered") from None

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return sorted(self._params)

    def items(self):
        for name in self.names():
            yield name, self._params[name]

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = np.zeros_like(t.data)

    def arrays(self) -> dict[str, np.ndarray]:
        """Current parameter values, copied, in lexicographic order."""
        return {name: self._params[name].data.copy() for name in self.names()}

    def load_arrays(self, arrays: dict[str, np.ndarray], strict: bool = True) -> None:
        for name, arr in arrays.items():
            if name not in self._params:
                if strict:
                    raise StateError(f"checkpoint tensor {name!r} has no matching parameter")
                continue
            t = self._params[name]
            arr = np.asarray(arr, dtype=self.dtype)
            if arr.shape != t.data.shape:
                raise StateError(
                    f"shape mismatch for {name!r}: store {t.data.shape}, loaded {arr.shape}"
                )
            t.data[...] = arr

    def to_double(self) -> "ParamStore":
        """Float64 copy for gradient checking; optimizer state is reset."""
        out = ParamStore(dtype=np.float64)
        for name in self.names():
            out.add(name, self._params[name].data.astype(np.float64))
        return out

    def freeze(self) -> "ParamStore":
        """Mark every parameter non-trainable; backward flows through but
        never accumulates into them."""
        for t in self._params.values():
            t.requires_grad = False
        return self


def adam_step(
    store: ParamStore,
    lr: float,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
    weight_decay: float = 0.0,
) -> None:
    """One Adam update over every parameter; AdamW when weight_decay > 0.

    Weight decay is decoupled (applied straight to the weights, not the
    gradient).  Increments the store step count and zeroes all gradients.
    """
    b1, b2 = betas
    store.step += 1
    t = store.step
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for name in store.names():
        p = store._params[name]
        if p.grad is None:
            raise StateError(f"parameter {name!r} has no gradient slot")
        g = p.grad
        m = store._m[name]
        v = store._v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        mhat = m / c1
        vhat = v / c2
        update = lr * mhat / (np.sqrt(vhat) + eps)
        if weight_decay != 0.0:
            update = update + lr * weight_decay * p.data
        p.data -= update.astype(p.data.dtype)
        p.grad = np.zeros_like(p.data)
