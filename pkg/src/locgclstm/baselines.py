"""Reference predictors: per-node linear regression and last-value persistence."""

from __future__ import annotations

import numpy as np

from .data import SampleSet
from .errors import ContractError, NumericError

__all__ = ["LinearModel", "lr_fit", "lr_predict", "persistence_predict"]

RIDGE = 1e-8


class LinearModel:
    """Least-squares weights per node (or one global set) plus intercepts."""

    def __init__(self, weights: np.ndarray, intercepts: np.ndarray, per_node: bool):
        self.weights = weights  # per_node: (N, L*F, H); global: (N*L*F, N*H)
        self.intercepts = intercepts
        self.per_node = per_node


def _solve_ls(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Normal equations with a small ridge for numeric stability."""
    ones = np.ones((x.shape[0], 1))
    xa = np.concatenate([x, ones], axis=1)
    gram = xa.T @ xa + RIDGE * np.eye(xa.shape[1])
    try:
        beta = np.linalg.solve(gram, xa.T @ y)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"singular normal equations: {exc}") from None
    return beta[:-1], beta[-1]


def lr_fit(samples: SampleSet, indices, per_node: bool = True) -> LinearModel:
    """Fit on the indexed samples' flattened lag blocks.

    Per-node mode (default) fits each node on its own 12 x F lag block;
    global mode flattens everything into one regression.
    """
    indices = np.asarray(indices, dtype=np.intp)
    if indices.size < 2:
        raise ContractError(f"linear fit needs >= 2 samples, got {indices.size}")
    x = samples.input_blocks(indices)  # (S, N, L, F)
    y = samples.target_blocks(indices)  # (S, N, H)
    s, n, lags, feats = x.shape
    horizon = y.shape[2]
    if per_node:
        weights = np.empty((n, lags * feats, horizon))
        intercepts = np.empty((n, horizon))
        for node in range(n):
            w, b = _solve_ls(x[:, node].reshape(s, -1), y[:, node])
            weights[node] = w
            intercepts[node] = b
        return LinearModel(weights, intercepts, per_node=True)
    w, b = _solve_ls(x.reshape(s, -1), y.reshape(s, -1))
    return LinearModel(w, b, per_node=False)


def lr_predict(model: LinearModel, block: np.ndarray) -> np.ndarray:
    """One raw input block (N, L, F) -> (N, H) predictions."""
    n = block.shape[0]
    if model.per_node:
        flat = block.reshape(n, -1)
        return np.stack(
            [flat[v] @ model.weights[v] + model.intercepts[v] for v in range(n)]
        )
    horizon = model.intercepts.size // n
    out = block.reshape(-1) @ model.weights + model.intercepts
    return out.reshape(n, horizon)


def persistence_predict(block: np.ndarray, flow_index: int, horizon: int = 12) -> np.ndarray:
    """Repeat each node's last observed flow across every horizon."""
    if block.ndim != 3 or block.shape[1] < 1:
        raise ContractError(f"persistence needs (N, L>=1, F) blocks, got {block.shape}")
    last = block[:, -1, flow_index]
    return np.repeat(last[:, None], horizon, axis=1)
