"""Finite-difference verification of analytic gradients.

Runs in float64 only: central differences in float32 lose most of their
significant digits and produce false alarms.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError, NonFiniteError
from .params import ParamStore
from .tensor import Tensor


@dataclass
class GradCheckReport:
    passed: bool
    max_rel_err: float
    n_checked: int
    violations: list[tuple[str, int, float, float, float]] = field(default_factory=list)

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        lines = [f"grad_check {status}: {self.n_checked} elements, max rel err {self.max_rel_err:.3e}"]
        for name, idx, analytic, numeric, rel in self.violations[:10]:
            lines.append(f"  {name}[{idx}]: analytic={analytic:.6e} numeric={numeric:.6e} rel={rel:.3e}")
        if len(self.violations) > 10:
            lines.append(f"  ... {len(self.violations) - 10} more")
        return "\n".join(lines)


def grad_check(
    f: Callable[[], Tensor],
    store: ParamStore,
    tol: float = 1e-4,
    h: float = 1e-5,
    element_limit: int | None = None,
    sample_seed: int = 0,
) -> GradCheckReport:
    """Compare analytic gradients of the scalar f() against central differences.

    An element fails when |analytic - numeric| / max(1, |numeric|) > tol.
    Aborts with NonFiniteError if the loss itself is non-finite.  By default
    every element of every parameter is checked; ``element_limit`` caps the
    elements checked per parameter (chosen by a seeded draw) so large
    composites stay affordable.
    """
    if store.dtype != np.float64:
        raise ConfigError("grad_check requires a float64 ParamStore (use store.to_double())")

    store.zero_grad()
    loss = f()
    if loss.data.size != 1:
        raise ConfigError("grad_check target must return a scalar Tensor")
    if not np.isfinite(loss.data).all():
        raise NonFiniteError("grad_check aborted: loss is non-finite at the base point")
    loss.backward()
    analytic = {name: t.grad.copy() for name, t in store.items()}

    def eval_loss() -> float:
        value = f().data
        if not np.isfinite(value).all():
            raise NonFiniteError("grad_check aborted: loss became non-finite under perturbation")
        return value.item()

    pick_rng = np.random.Generator(np.random.PCG64(sample_seed))
    violations = []
    max_rel = 0.0
    n_checked = 0
    for name, t in store.items():
        flat = t.data.reshape(-1)
        grad_flat = analytic[name].reshape(-1)
        if element_limit is not None and flat.size > element_limit:
            indices = pick_rng.choice(flat.size, size=element_limit, replace=False)
        else:
            indices = range(flat.size)
        for i in indices:
            old = flat[i]
            step = h * max(1.0, abs(old))
            flat[i] = old + step
            f_plus = eval_loss()
            flat[i] = old - step
            f_minus = eval_loss()
            flat[i] = old
            numeric = (f_plus - f_minus) / (2.0 * step)
            rel = abs(grad_flat[i] - numeric) / max(1.0, abs(numeric))
            max_rel = max(max_rel, rel)
            n_checked += 1
            if rel > tol:
                violations.append((name, i, float(grad_flat[i]), float(numeric), float(rel)))
    return GradCheckReport(passed=not violations, max_rel_err=max_rel, n_checked=n_checked, violations=violations)
