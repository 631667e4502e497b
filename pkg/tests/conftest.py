import csv
from pathlib import Path

import numpy as np
import pytest

from rfpathway.forest import Tree

FIXTURES = Path(__file__).parent / "fixtures"


def fixture_path(name: str) -> Path:
    return FIXTURES / name


def expected_edges(name: str) -> set[tuple[str, str, int]]:
    with fixture_path(f"expected_{name}.csv").open(newline="") as fh:
        return {(r["source"], r["target"], int(r["lag"])) for r in csv.DictReader(fh)}


def one_split_tree() -> Tree:
    """Column 0 split at 2.5 with leaves 0 and 1, two rows each."""
    return Tree.from_nested({
        "column": 0, "threshold": 2.5, "cover": 4,
        "left": {"value": 0.0, "cover": 2},
        "right": {"value": 1.0, "cover": 2},
    })


def random_tree(rng: np.random.Generator, n_cols: int, max_depth: int) -> Tree:
    """Random tree with integer covers that sum correctly at every node."""

    def grow(depth: int, cover: int) -> dict:
        if depth >= max_depth or cover < 2 or rng.random() < 0.2:
            return {"value": float(rng.normal()), "cover": cover}
        left = int(rng.integers(1, cover))
        return {
            "column": int(rng.integers(n_cols)),
            "threshold": float(rng.normal()),
            "cover": cover,
            "left": grow(depth + 1, left),
            "right": grow(depth + 1, cover - left),
        }

    return Tree.from_nested(grow(0, int(rng.integers(8, 51))))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
