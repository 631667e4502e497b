"""Goodness-of-fit metrics and the accept/abort gate."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

R2_MIN = 0.75
RMSE_MAX = 0.15


class DegenerateVarianceError(ValueError):
    pass


def _pair(y, yhat, min_len: int):
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape or y.ndim != 1:
        raise ValueError(f"length mismatch: {y.shape} vs {yhat.shape}")
    if y.size < min_len:
        raise ValueError(f"need at least {min_len} samples, got {y.size}")
    return y, yhat


def r2(y, yhat) -> float:
    """Coefficient of determination."""
    y, yhat = _pair(y, yhat, 2)
    ybar = math.fsum(y) / y.size
    ss_tot = math.fsum((y - ybar) ** 2)
    if ss_tot == 0.0:
        raise DegenerateVarianceError("target is constant; R^2 is undefined")
    return 1.0 - math.fsum((y - yhat) ** 2) / ss_tot


def r2_adj(y, yhat, p: int) -> float:
    """Adjusted R^2 for ``p`` predictors; requires n - p - 1 >= 1."""
    y, yhat = _pair(y, yhat, 2)
    n = y.size
    if n - p - 1 <= 0:
        raise ValueError(f"insufficient samples for adjustment: n={n}, p={p}")
    return 1.0 - (1.0 - r2(y, yhat)) * (n - 1) / (n - p - 1)


def rmse(y, yhat) -> float:
    y, yhat = _pair(y, yhat, 1)
    return math.sqrt(math.fsum((y - yhat) ** 2) / y.size)


@dataclass(frozen=True)
class FitReport:
    r2: float
    r2_adj: float
    rmse: float
    n: int
    p: int

    @classmethod
    def compute(cls, y, yhat, p: int) -> "FitReport":
        y = np.asarray(y, dtype=float)
        return cls(r2(y, yhat), r2_adj(y, yhat, p), rmse(y, yhat), int(y.size), int(p))

    @classmethod
    def compute_or_none(cls, y, yhat, p: int) -> "FitReport | None":
        """As :meth:`compute`, but ``None`` for a constant target."""
        try:
            return cls.compute(y, yhat, p)
        except DegenerateVarianceError:
            return None

    def to_dict(self) -> dict:
        return asdict(self)


def passes_fit_gate(report: FitReport, r2_min: float = R2_MIN, rmse_max: float = RMSE_MAX) -> bool:
    """Adjusted R^2 strictly above ``r2_min`` and RMSE at most ``rmse_max``."""
    return report.r2_adj > r2_min and report.rmse <= rmse_max
