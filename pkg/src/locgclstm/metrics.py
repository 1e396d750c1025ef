"""Evaluation criteria: RMSE, MAE, MAPE, MdAE, MdAPE.

Percentage metrics skip entries whose ground truth is (near) zero; the
report carries the number of skipped entries so nothing hides. When every
entry is skipped the percentage metrics are None rather than zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, ShapeMismatchError

__all__ = ["MetricsReport", "evaluate", "MAPE_DENOMINATOR_EPS"]

MAPE_DENOMINATOR_EPS = 1e-6


@dataclass(frozen=True)
class MetricsReport:
    rmse: float
    mae: float
    mape: float | None
    mdae: float
    mdape: float | None
    mape_excluded: int = 0

    def as_dict(self) -> dict:
        return {
            "RMSE": self.rmse,
            "MAE": self.mae,
            "MAPE": self.mape,
            "MdAE": self.mdae,
            "MdAPE": self.mdape,
            "mape_excluded": self.mape_excluded,
        }

    def format_row(self) -> dict[str, str]:
        def fmt(v):
            return "undefined" if v is None else f"{v:.3f}"

        return {
            "RMSE": fmt(self.rmse),
            "MAE": fmt(self.mae),
            "MAPE(%)": fmt(self.mape),
            "MdAE": fmt(self.mdae),
            "MdAPE(%)": fmt(self.mdape),
        }


def evaluate(pred, truth, eps: float = MAPE_DENOMINATOR_EPS) -> MetricsReport:
    """Compute all five criteria over flat prediction/truth value pairs."""
    pred = np.asarray(pred, dtype=np.float64).ravel()
    truth = np.asarray(truth, dtype=np.float64).ravel()
    if pred.shape != truth.shape:
        raise ShapeMismatchError(f"evaluate: {pred.shape} vs {truth.shape}")
    if pred.size == 0:
        raise ContractError("evaluate: empty inputs")
    abs_err = np.abs(pred - truth)
    rmse = float(np.sqrt(np.mean((pred - truth) ** 2)))
    mae = float(np.mean(abs_err))
    mdae = float(np.median(abs_err))
    ok = np.abs(truth) >= eps
    excluded = int(np.count_nonzero(~ok))
    if np.any(ok):
        pct = np.abs((pred[ok] - truth[ok]) / truth[ok]) * 100.0
        mape = float(np.mean(pct))
        mdape = float(np.median(pct))
    else:
        mape = None
        mdape = None
    # quadratic mean >= arithmetic mean of |errors|; tolerate float rounding
    assert rmse >= mae - 1e-12 * max(1.0, rmse)
    return MetricsReport(
        rmse=rmse, mae=mae, mape=mape, mdae=mdae, mdape=mdape, mape_excluded=excluded
    )
