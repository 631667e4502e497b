"""Path-dependent TreeSHAP attributions and edge-weight aggregation.

The game explained is the cover-weighted conditional expectation of the
tree: when a column is absent, both branches of a split on it are averaged
with weights ``cover(child) / cover(parent)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import Union

import numpy as np

from . import _kernels
from .forest import RegressionForest, Tree
from .lags import ColumnKey, DesignMatrix

MAX_ORACLE_COLUMNS = 16


@dataclass(frozen=True)
class Attribution:
    phi: np.ndarray
    base: float

    @property
    def total(self) -> float:
        return self.base + float(np.sum(self.phi))


def _check_cover(tree: Tree):
    if tree.cover is None or tree.cover.size != tree.feature.size or np.any(tree.cover <= 0):
        raise ValueError("tree is missing cover counts")


def tree_shap_matrix(tree: Tree, X: np.ndarray, n_columns: int) -> np.ndarray:
    """SHAP values of ``tree`` for every row of ``X`` (rows x n_columns)."""
    _check_cover(tree)
    X = _kernels.writable(np.atleast_2d(X).astype(float, copy=False))
    if X.shape[1] != n_columns:
        raise ValueError(f"expected {n_columns} columns, got {X.shape[1]}")
    w = _kernels.writable
    return _kernels.tree_shap_rows(w(tree.feature), w(tree.threshold), w(tree.left), w(tree.right),
                                   w(tree.value), w(tree.cover), X, n_columns)


def tree_shap(tree: Tree, x, n_columns: int | None = None) -> Attribution:
    x = np.asarray(x, dtype=float)
    n_columns = x.size if n_columns is None else n_columns
    phi = tree_shap_matrix(tree, x[None, :], n_columns)[0]
    return Attribution(phi, tree.expected_value())


def forest_shap_matrix(forest: RegressionForest, X: np.ndarray) -> np.ndarray:
    """Mean over trees of per-tree SHAP matrices."""
    X = _kernels.writable(np.atleast_2d(X).astype(float, copy=False))
    total = np.zeros((X.shape[0], forest.n_columns))
    for t in forest.trees:
        total += tree_shap_matrix(t, X, forest.n_columns)
    return total / len(forest.trees)


def forest_base(forest: RegressionForest) -> float:
    return float(np.mean([t.expected_value() for t in forest.trees]))


def forest_shap(forest: RegressionForest, x) -> Attribution:
    phi = forest_shap_matrix(forest, np.asarray(x, dtype=float)[None, :])[0]
    return Attribution(phi, forest_base(forest))


# ---------------------------------------------------------------------------
# brute-force oracle


def _cond_expectation(tree: Tree, x: np.ndarray, present: frozenset, node: int = 0) -> float:
    f = tree.feature[node]
    if f < 0:
        return float(tree.value[node])
    left, right = int(tree.left[node]), int(tree.right[node])
    if f in present:
        nxt = left if x[f] <= tree.threshold[node] else right
        return _cond_expectation(tree, x, present, nxt)
    c = tree.cover
    return (c[left] * _cond_expectation(tree, x, present, left)
            + c[right] * _cond_expectation(tree, x, present, right)) / c[node]


def brute_force_shapley(model: Union[Tree, RegressionForest], x, n_columns: int | None = None) -> Attribution:
    """Shapley values by enumerating every coalition (exponential; a test oracle)."""
    x = np.asarray(x, dtype=float)
    trees = model.trees if isinstance(model, RegressionForest) else (model,)
    if isinstance(model, RegressionForest):
        n_columns = model.n_columns
    M = x.size if n_columns is None else n_columns
    if M > MAX_ORACLE_COLUMNS:
        raise ValueError(f"oracle limited to {MAX_ORACLE_COLUMNS} columns, got {M}")
    for t in trees:
        _check_cover(t)

    cache: dict[frozenset, float] = {}

    def v(S: frozenset) -> float:
        if S not in cache:
            cache[S] = sum(_cond_expectation(t, x, S) for t in trees) / len(trees)
        return cache[S]

    weights = [math.factorial(s) * math.factorial(M - s - 1) / math.factorial(M) for s in range(M)]
    phi = np.zeros(M)
    for i in range(M):
        others = [j for j in range(M) if j != i]
        acc = 0.0
        for size in range(M):
            for S in combinations(others, size):
                S = frozenset(S)
                acc += weights[size] * (v(S | {i}) - v(S))
        phi[i] = acc
    return Attribution(phi, v(frozenset()))


# ---------------------------------------------------------------------------
# aggregation


@dataclass(frozen=True)
class ImportanceVector:
    columns: tuple[ColumnKey, ...]
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (len(self.columns),):
            raise ValueError("one weight per column required")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        object.__setattr__(self, "weights", w)

    def as_dict(self) -> dict[ColumnKey, float]:
        return dict(zip(self.columns, self.weights.tolist()))


def aggregate_importance(forest: RegressionForest, design: DesignMatrix) -> ImportanceVector:
    """Mean |SHAP| per design column over the design's own rows."""
    if design.n_rows == 0:
        raise ValueError("empty design")
    phi = forest_shap_matrix(forest, design.X)
    # math.fsum per column: exactly rounded, so row order cannot change the result
    weights = np.array([math.fsum(col) for col in np.abs(phi).T]) / design.n_rows
    return ImportanceVector(tuple(design.columns), weights)


def dump_attributions(forest: RegressionForest, design: DesignMatrix, path: str | Path) -> None:
    """Debug dump of per-row attributions: ``t,column,phi``."""
    phi = forest_shap_matrix(forest, design.X)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("t", "column", "phi"))
        for r, t in enumerate(design.t):
            for c, key in enumerate(design.columns):
                w.writerow((int(t), key.label(), repr(float(phi[r, c]))))
