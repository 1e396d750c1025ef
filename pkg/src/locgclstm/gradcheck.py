"""Central finite-difference gradients, used as the oracle for every layer.

``finite_difference_gradient`` perturbs one scalar parameter entry at a time,
so it is slow but completely independent of the tape machinery it checks.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .autodiff import ParameterSet
from .errors import ContractError, NumericError


def finite_difference_gradient(
    f: Callable[[ParameterSet], float],
    params: ParameterSet,
    h: float = 1e-6,
) -> dict[str, np.ndarray]:
    """Per-entry central difference (f(p+h) - f(p-h)) / (2h) for every parameter."""
    if h <= 0:
        raise ContractError(f"step size must be positive, got {h}")
    grads: dict[str, np.ndarray] = {}
    for name, tensor in params.items():
        flat = tensor.data.ravel()
        grad = np.zeros_like(flat)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + h
            f_plus = float(f(params))
            flat[idx] = orig - h
            f_minus = float(f(params))
            flat[idx] = orig
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise NumericError(
                    f"non-finite objective while perturbing {name!r}[{idx}]"
                )
            grad[idx] = (f_plus - f_minus) / (2.0 * h)
        grads[name] = grad.reshape(tensor.data.shape)
    return grads


def max_relative_error(
    analytic: dict[str, np.ndarray],
    numeric: dict[str, np.ndarray],
    floor: float = 1e-4,
) -> float:
    """Worst |a - n| / max(|a|, |n|, floor) over all entries of all parameters.

    The floor turns the comparison into an absolute one for entries smaller
    than ``floor``: central differences at h=1e-6 carry ~1e-10 of roundoff
    noise, so a tiny true gradient can never pass a purely relative gate.
    With the default floor, a 1e-5 relative gate also enforces a 1e-9
    absolute gate on near-zero entries.
    """
    worst = 0.0
    for name, a in analytic.items():
        n = numeric[name]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst
