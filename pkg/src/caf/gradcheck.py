"""Finite-difference verification of reverse-mode gradients.

The check perturbs every parameter element in turn, so it is meant for the
tiny configurations used in tests. The computation under test must be
deterministic given the parameter values (no dropout).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .autodiff import Tensor
from .errors import NumericError
from .params import ParamStore


@dataclass
class CheckReport:
    max_rel_error: float
    worst_param: str
    worst_index: int
    tol: float
    per_param: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tol


def grad_check(
    f: Callable[[ParamStore], Tensor],
    store: ParamStore,
    h: float = 1e-4,
    tol: float = 1e-4,
) -> CheckReport:
    """Compare reverse-mode gradients of f against central finite differences.

    Relative error per element is |ad - fd| / max(|ad|, |fd|, 1e-8); the
    report carries the worst element over all parameters.
    """
    store.zero_grads()
    loss = f(store)
    if not np.isfinite(loss.values).all():
        raise NumericError("objective is not finite at the evaluation point")
    loss.backward()
    analytic = {
        name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.values))
        for name, t in store.params.items()
    }

    worst = (0.0, "", -1)
    per_param: dict[str, float] = {}
    for name, t in store.params.items():
        flat = t.values.ravel()
        ad = analytic[name].ravel()
        param_worst = 0.0
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            f_plus = f(store).item()
            flat[i] = keep - h
            f_minus = f(store).item()
            flat[i] = keep
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise NumericError(f"objective not finite while perturbing {name}[{i}]")
            fd = (f_plus - f_minus) / (2.0 * h)
            rel = abs(ad[i] - fd) / max(abs(ad[i]), abs(fd), 1e-8)
            if rel > param_worst:
                param_worst = rel
            if rel > worst[0]:
                worst = (rel, name, i)
        per_param[name] = param_worst
    return CheckReport(
        max_rel_error=worst[0],
        worst_param=worst[1],
        worst_index=worst[2],
        tol=tol,
        per_param=per_param,
    )
