"""Cyclic time encoding, z-score standardization, and categorical codes.

A five-minute interval index within the day and an hour index within the
week are each mapped to a (sin, cos) pair, so a short input window still
carries the daily and weekly phase. Standardization is per feature with the
population standard deviation, fitted on training rows only and frozen.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, ValidationError

__all__ = [
    "CalendarConfig",
    "trig_encode",
    "trig_encode_arrays",
    "StandardizationParams",
    "zscore_fit",
    "zscore_apply",
    "zscore_invert",
    "Vocabulary",
]

STD_CLAMP_EPS = 1e-12
UNKNOWN_CODE = 0


@dataclass(frozen=True)
class CalendarConfig:
    """Cycle lengths: 5-minute moments per day, hours per week."""

    moment_num: int = 288
    hour_num: int = 168

    def __post_init__(self):
        if self.moment_num <= 0 or self.hour_num <= 0:
            raise ValidationError(
                f"cycle lengths must be positive, got {self.moment_num}, {self.hour_num}"
            )


def trig_encode(moment: int, hour: int, cfg: CalendarConfig = CalendarConfig()):
    """(moment_sin, moment_cos, hour_sin, hour_cos) for one time point."""
    if not (0 <= moment < cfg.moment_num):
        raise ValidationError(f"moment index {moment} outside [0, {cfg.moment_num})")
    if not (0 <= hour < cfg.hour_num):
        raise ValidationError(f"hour index {hour} outside [0, {cfg.hour_num})")
    m_angle = 2.0 * np.pi * moment / cfg.moment_num
    h_angle = 2.0 * np.pi * hour / cfg.hour_num
    return (
        float(np.sin(m_angle)),
        float(np.cos(m_angle)),
        float(np.sin(h_angle)),
        float(np.cos(h_angle)),
    )


def trig_encode_arrays(moments, hours, cfg: CalendarConfig = CalendarConfig()):
    """Vectorized variant: four arrays for arrays of indices."""
    moments = np.asarray(moments)
    hours = np.asarray(hours)
    if np.any((moments < 0) | (moments >= cfg.moment_num)):
        raise ValidationError("moment index outside the daily cycle")
    if np.any((hours < 0) | (hours >= cfg.hour_num)):
        raise ValidationError("hour index outside the weekly cycle")
    m_angle = 2.0 * np.pi * moments / cfg.moment_num
    h_angle = 2.0 * np.pi * hours / cfg.hour_num
    return np.sin(m_angle), np.cos(m_angle), np.sin(h_angle), np.cos(h_angle)


@dataclass(frozen=True)
class StandardizationParams:
    """Per-feature mean and (clamped) population std, frozen after fit."""

    mean: np.ndarray
    std: np.ndarray

    def column(self, index: int) -> "StandardizationParams":
        return StandardizationParams(
            mean=self.mean[index : index + 1].copy(),
            std=self.std[index : index + 1].copy(),
        )


def zscore_fit(columns) -> StandardizationParams:
    """Fit per-column mean/std on training rows (rows x features)."""
    x = np.asarray(columns, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < 2:
        raise ContractError(f"zscore_fit needs at least 2 rows, got {x.shape[0]}")
    mean = x.mean(axis=0)
    std = x.std(axis=0)  # population std
    std = np.where(std < STD_CLAMP_EPS, 1.0, std)  # constant columns map to zero
    return StandardizationParams(mean=mean, std=std)


def zscore_apply(values, params: StandardizationParams) -> np.ndarray:
    return (np.asarray(values, dtype=np.float64) - params.mean) / params.std


def zscore_invert(z, params: StandardizationParams) -> np.ndarray:
    return np.asarray(z, dtype=np.float64) * params.std + params.mean


@dataclass
class Vocabulary:
    """Stable label -> integer code map; code 0 is reserved for unseen labels."""

    codes: dict[str, int] = field(default_factory=dict)

    @classmethod
    def fit(cls, labels) -> "Vocabulary":
        codes: dict[str, int] = {}
        for label in labels:
            if label not in codes:
                codes[label] = len(codes) + 1  # first-seen label gets 1
        return cls(codes=codes)

    def encode(self, label) -> int:
        return self.codes.get(label, UNKNOWN_CODE)

    def labels(self) -> list[str]:
        return list(self.codes)

    def __len__(self) -> int:
        return len(self.codes)
