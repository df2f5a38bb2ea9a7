"""Central-difference gradient checker for anything exposing named_parameters()."""

from __future__ import annotations

import math
from typing import Callable, Protocol, Sequence

import numpy as np

from .autograd import Tensor, no_grad


class HasNamedParameters(Protocol):
    def named_parameters(self) -> Sequence[tuple[str, Tensor]]: ...


def grad_check(
    loss_fn: Callable[[HasNamedParameters], Tensor],
    params: HasNamedParameters,
    eps: float = 1e-5,
) -> float:
    """Compare tape gradients of loss_fn against central finite differences.

    For every scalar entry theta of every named parameter the analytic
    dL/dtheta is checked against (L(theta+eps) - L(theta-eps)) / (2 eps);
    returns max over entries of |a - n| / max(|a|, |n|, 1e-8).

    loss_fn must be deterministic and is re-evaluated 2x per scalar, so keep
    parameter counts small when calling this.
    """
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    named = list(params.named_parameters())
    for _, t in named:
        t.grad = None

    loss = loss_fn(params)
    if not math.isfinite(float(loss.data)):
        raise ValueError("loss is non-finite at the evaluation point")
    loss.backward()
    analytic = {
        name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
        for name, t in named
    }

    worst = 0.0
    with no_grad():
        for name, t in named:
            flat = t.data.reshape(-1)
            aflat = analytic[name].reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                lo_hi = float(loss_fn(params).data)
                flat[i] = orig - eps
                lo_lo = float(loss_fn(params).data)
                flat[i] = orig
                if not (math.isfinite(lo_hi) and math.isfinite(lo_lo)):
                    raise ValueError(f"loss non-finite while perturbing {name}[{i}]")
                numeric = (lo_hi - lo_lo) / (2.0 * eps)
                rel = abs(aflat[i] - numeric) / max(abs(aflat[i]), abs(numeric), 1e-8)
                worst = max(worst, rel)
    return worst
