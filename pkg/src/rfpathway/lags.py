"""Lagged design matrices: one supervised table per target feature."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .data import DataError, FeatureCollection


@dataclass(frozen=True)
class LagSpec:
    lags: tuple[int, ...]

    def __post_init__(self):
        lags = tuple(int(l) for l in self.lags)
        if not lags:
            raise ValueError("lag set must be nonempty")
        if lags[0] < 1:
            raise ValueError(f"lags must be positive, got {lags}")
        if any(b <= a for a, b in zip(lags, lags[1:])):
            raise ValueError(f"lags must be strictly increasing, got {lags}")
        object.__setattr__(self, "lags", lags)

    @classmethod
    def of(cls, lags: Sequence[int]) -> "LagSpec":
        return cls(tuple(lags))

    @property
    def q(self) -> int:
        return len(self.lags)

    @property
    def max(self) -> int:
        return self.lags[-1]

    def __iter__(self):
        return iter(self.lags)

    def __contains__(self, lag) -> bool:
        return lag in self.lags


SYNTHETIC_LAGS = LagSpec((1, 2, 3, 4, 5))
PINATUBO_LAGS = LagSpec(tuple(range(1, 62, 5)))


class ColumnKey(NamedTuple):
    source: str
    lag: int

    def label(self) -> str:
        return f"{self.source}@{self.lag}"


@dataclass(frozen=True)
class DesignMatrix:
    columns: tuple[ColumnKey, ...]
    X: np.ndarray
    y: np.ndarray
    target: str
    t: np.ndarray  # 1-based time index of each row

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def n_columns(self) -> int:
        return self.X.shape[1]

    def restrict(self, keep: Sequence[ColumnKey]) -> "DesignMatrix":
        """Sub-design holding only ``keep`` (in the order given)."""
        index = {c: i for i, c in enumerate(self.columns)}
        try:
            idx = [index[c] for c in keep]
        except KeyError as e:
            raise KeyError(f"column {e.args[0]} not in design") from None
        return DesignMatrix(tuple(keep), self.X[:, idx], self.y, self.target, self.t)


def build_design(collection: FeatureCollection, lags: LagSpec, target: str) -> DesignMatrix:
    """Pair ``target(t)`` with every ``feature(t - lag)`` for t = max(L)+1 .. K.

    Columns run feature-major, lag-minor in collection order. The target's own
    lags are included as inputs.
    """
    if target not in collection.names:
        raise DataError(f"unknown target feature {target!r}")
    K = collection.K
    if K <= lags.max:
        raise DataError(f"series too short for lag set: K={K}, max lag={lags.max}")
    first = lags.max  # 0-based index of the first target row
    columns = []
    blocks = []
    for f in collection.features:
        for lag in lags:
            columns.append(ColumnKey(f.name, lag))
            blocks.append(f.values[first - lag:K - lag])
    X = np.column_stack(blocks)
    y = np.array(collection[target][first:])
    t = np.arange(first + 1, K + 1)
    X.setflags(write=False)
    y.setflags(write=False)
    return DesignMatrix(tuple(columns), X, y, target, t)
