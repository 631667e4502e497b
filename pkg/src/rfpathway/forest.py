"""Bagged CART regression forest grown from scratch.

Each tree draws its own xoshiro256++ stream from
``derive_seed(config.seed, target, member, tree_index)``, so a fitted forest
depends only on the design and the config, never on how trees are scheduled.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Iterator

import numpy as np

from . import _kernels
from .lags import DesignMatrix
from .rng import Xoshiro256pp, derive_seed

UNLIMITED_DEPTH = 10_000


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    max_depth: int = 4
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    bootstrap: bool = True
    features_per_split: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be >= 2")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if not 0.0 < self.features_per_split <= 1.0:
            raise ValueError("features_per_split must lie in (0, 1]")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")


@dataclass(frozen=True)
class TreeNode:
    """Read-only view of one node of a :class:`Tree`."""

    tree: "Tree"
    id: int

    @property
    def is_leaf(self) -> bool:
        return self.tree.feature[self.id] < 0

    @property
    def column(self) -> int:
        return int(self.tree.feature[self.id])

    @property
    def threshold(self) -> float:
        return float(self.tree.threshold[self.id])

    @property
    def value(self) -> float:
        return float(self.tree.value[self.id])

    @property
    def cover(self) -> int:
        return int(self.tree.cover[self.id])

    @property
    def left(self) -> "TreeNode":
        return TreeNode(self.tree, int(self.tree.left[self.id]))

    @property
    def right(self) -> "TreeNode":
        return TreeNode(self.tree, int(self.tree.right[self.id]))


@dataclass(frozen=True, eq=False)
class Tree:
    """One regression tree as parallel node arrays; node 0 is the root."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    cover: np.ndarray

    def __post_init__(self):
        for name in ("feature", "threshold", "left", "right", "value", "cover"):
            getattr(self, name).setflags(write=False)

    @classmethod
    def leaf(cls, value: float, cover: int = 1) -> "Tree":
        return cls.from_nested({"value": value, "cover": cover})

    @classmethod
    def from_nested(cls, doc: dict) -> "Tree":
        """Build from nested dicts: leaves ``{"value", "cover"}``, internal nodes
        ``{"column", "threshold", "cover", "left", "right"}`` (``value`` optional)."""
        nodes: list[dict] = []
        order: list[tuple[dict, int]] = []

        def walk(d):
            nid = len(nodes)
            nodes.append(d)
            slot = {"d": d, "left": -1, "right": -1}
            order.append(slot)
            if "left" in d:
                slot["left"] = walk(d["left"])
                slot["right"] = walk(d["right"])
            return nid

        walk(doc)
        n = len(nodes)
        feature = np.full(n, -1, dtype=np.int64)
        threshold = np.zeros(n)
        left = np.full(n, -1, dtype=np.int64)
        right = np.full(n, -1, dtype=np.int64)
        value = np.zeros(n)
        cover = np.zeros(n, dtype=np.int64)
        for i, slot in enumerate(order):
            if "cover" not in slot["d"]:
                raise ValueError("every node needs a cover count")
            cover[i] = int(slot["d"]["cover"])
        for i, slot in enumerate(order):
            d = slot["d"]
            if slot["left"] >= 0:
                feature[i] = int(d["column"])
                threshold[i] = float(d["threshold"])
                left[i] = slot["left"]
                right[i] = slot["right"]
                if cover[i] != cover[left[i]] + cover[right[i]]:
                    raise ValueError(f"node {i}: cover {cover[i]} != children sum")
        # leaf values first, then internal means bottom-up where not given
        for i in reversed(range(n)):
            d = order[i]["d"]
            if "value" in d:
                value[i] = float(d["value"])
            elif feature[i] >= 0:
                cl, cr = cover[left[i]], cover[right[i]]
                value[i] = (cl * value[left[i]] + cr * value[right[i]]) / (cl + cr)
            else:
                raise ValueError("leaf without value")
        return cls(feature, threshold, left, right, value, cover)

    @property
    def root(self) -> TreeNode:
        return TreeNode(self, 0)

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    def nodes(self) -> Iterator[TreeNode]:
        for i in range(self.n_nodes):
            yield TreeNode(self, i)

    def depth(self) -> int:
        w = _kernels.writable
        return int(_kernels._tree_depth(w(self.feature), w(self.left), w(self.right)))

    def used_columns(self) -> set[int]:
        return {int(c) for c in self.feature if c >= 0}

    def predict(self, X: np.ndarray) -> np.ndarray:
        w = _kernels.writable
        X = w(np.atleast_2d(X).astype(float, copy=False))
        return _kernels.predict_tree(w(self.feature), w(self.threshold), w(self.left), w(self.right),
                                     w(self.value), X)

    def expected_value(self) -> float:
        """Cover-weighted mean of the leaf values."""
        leaves = self.feature < 0
        return float(np.dot(self.cover[leaves], self.value[leaves]) / self.cover[0])

    def to_nested(self, node: int = 0) -> dict:
        if self.feature[node] < 0:
            return {"value": float(self.value[node]), "cover": int(self.cover[node])}
        return {
            "column": int(self.feature[node]),
            "threshold": float(self.threshold[node]),
            "cover": int(self.cover[node]),
            "value": float(self.value[node]),
            "left": self.to_nested(int(self.left[node])),
            "right": self.to_nested(int(self.right[node])),
        }

    def same_structure(self, other: "Tree") -> bool:
        """Equal splits, values and covers, whatever the node numbering."""
        return self.to_nested() == other.to_nested()


@dataclass(frozen=True, eq=False)
class RegressionForest:
    trees: tuple[Tree, ...]
    config: ForestConfig
    n_columns: int
    columns: tuple = field(default=())

    def __post_init__(self):
        for t in self.trees:
            if any(c >= self.n_columns for c in t.used_columns()):
                raise ValueError("split column index out of range")

    def predict(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if x.ndim != 1 or x.size != self.n_columns:
            raise ValueError(f"expected a vector of length {self.n_columns}, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("input contains non-finite values")
        return float(self.predict_batch(x[None, :])[0])

    def predict_batch(self, X) -> np.ndarray:
        X = _kernels.writable(np.atleast_2d(X).astype(float, copy=False))
        if X.shape[1] != self.n_columns:
            raise ValueError(f"expected {self.n_columns} columns, got {X.shape[1]}")
        total = np.zeros(X.shape[0])
        for t in self.trees:
            total += t.predict(X)
        return total / len(self.trees)

    def same_structure(self, other: "RegressionForest") -> bool:
        return len(self.trees) == len(other.trees) and all(
            a.same_structure(b) for a, b in zip(self.trees, other.trees)
        )

    def to_json(self) -> str:
        doc = {
            "config": asdict(self.config),
            "n_columns": self.n_columns,
            "columns": [list(c) for c in self.columns],
            "trees": [t.to_nested() for t in self.trees],
        }
        return json.dumps(doc, indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RegressionForest":
        doc = json.loads(text)
        trees = tuple(Tree.from_nested(t) for t in doc["trees"])
        columns = tuple(tuple(c) for c in doc.get("columns", []))
        return cls(trees, ForestConfig(**doc["config"]), doc["n_columns"], columns)


def _tree_state(seed: int) -> np.ndarray:
    return np.array(Xoshiro256pp(seed).state(), dtype=np.uint64)


def fit_tree(X: np.ndarray, y: np.ndarray, config: ForestConfig, tree_seed: int) -> Tree:
    n, p = X.shape
    state = _tree_state(tree_seed)
    if config.bootstrap:
        samples = _kernels.draw_indices(state, n, n)
    else:
        samples = np.arange(n, dtype=np.int64)
    n_try = max(1, int(config.features_per_split * p))
    feature, threshold, left, right, value, cover, n_nodes = _kernels.grow_tree(
        X, y, samples, config.max_depth, config.min_samples_split,
        config.min_samples_leaf, n_try, state,
    )
    k = int(n_nodes)
    return Tree(feature[:k].copy(), threshold[:k].copy(), left[:k].copy(),
                right[:k].copy(), value[:k].copy(), cover[:k].copy())


def fit(design: DesignMatrix, config: ForestConfig, member: int = 0) -> RegressionForest:
    """Grow ``config.n_trees`` trees on ``design``.

    ``member`` identifies the ensemble member and only enters seed derivation.
    """
    if design.n_rows == 0 or design.n_columns == 0:
        raise ValueError("cannot fit a forest on an empty design")
    X = _kernels.writable(design.X.astype(float, copy=False))
    y = _kernels.writable(design.y.astype(float, copy=False))
    trees = tuple(
        fit_tree(X, y, config, derive_seed(config.seed, design.target, member, i))
        for i in range(config.n_trees)
    )
    return RegressionForest(trees, config, design.n_columns, tuple(design.columns))


def predict(forest: RegressionForest, x) -> float:
    return forest.predict(x)


def predict_batch(forest: RegressionForest, X) -> np.ndarray:
    return forest.predict_batch(X)
