import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rfpathway.data import DataError, FeatureCollection
from rfpathway.lags import PINATUBO_LAGS, SYNTHETIC_LAGS, ColumnKey, LagSpec, build_design


def test_preset_lag_sets():
    assert SYNTHETIC_LAGS.lags == (1, 2, 3, 4, 5)
    assert PINATUBO_LAGS.lags == (1, 6, 11, 16, 21, 26, 31, 36, 41, 46, 51, 56, 61)
    assert PINATUBO_LAGS.q == 13 and PINATUBO_LAGS.max == 61


@pytest.mark.parametrize("bad", [(), (0, 1), (2, 1), (1, 1)])
def test_lagspec_validation(bad):
    with pytest.raises(ValueError):
        LagSpec(bad)


def test_single_shift():
    d = build_design(FeatureCollection.from_arrays({"A": [1, 2, 3, 4]}), LagSpec((1,)), "A")
    np.testing.assert_array_equal(d.X, [[1], [2], [3]])
    np.testing.assert_array_equal(d.y, [2, 3, 4])
    np.testing.assert_array_equal(d.t, [2, 3, 4])


def test_two_lags():
    d = build_design(FeatureCollection.from_arrays({"A": [1, 2, 3, 4, 5]}), LagSpec((1, 3)), "A")
    np.testing.assert_array_equal(d.X, [[3, 1], [4, 2]])
    np.testing.assert_array_equal(d.y, [4, 5])
    assert d.columns == (ColumnKey("A", 1), ColumnKey("A", 3))


def test_too_short():
    with pytest.raises(DataError, match="too short"):
        build_design(FeatureCollection.from_arrays({"A": [1, 2, 3, 4, 5]}), LagSpec((5,)), "A")


def test_unknown_target():
    with pytest.raises(DataError):
        build_design(FeatureCollection.from_arrays({"A": [1, 2, 3]}), LagSpec((1,)), "B")


@settings(max_examples=150)
@given(st.integers(1, 4), st.lists(st.integers(1, 6), min_size=1, max_size=4, unique=True),
       st.integers(0, 20), st.data())
def test_matches_index_oracle(n_feat, lags, extra, data):
    lags = LagSpec(tuple(sorted(lags)))
    K = lags.max + 1 + extra
    names = [f"f{i}" for i in range(n_feat)]
    fc = FeatureCollection.from_arrays({n: np.arange(K) * 10.0 + i for i, n in enumerate(names)})
    target = data.draw(st.sampled_from(names))
    d = build_design(fc, lags, target)
    assert d.X.shape == (K - lags.max, n_feat * lags.q)
    for row, t in enumerate(d.t):  # t is 1-based
        assert d.y[row] == fc[target][t - 1]
        for col, key in enumerate(d.columns):
            assert d.X[row, col] == fc[key.source][t - key.lag - 1]
    # feature-major, lag-minor, target's own lags included
    assert [c.source for c in d.columns] == [n for n in names for _ in lags]
    assert ColumnKey(target, lags.lags[0]) in d.columns


def test_restrict_keeps_requested_columns():
    fc = FeatureCollection.from_arrays({"A": np.arange(8.0), "B": np.arange(8.0) * 2})
    d = build_design(fc, LagSpec((1, 2)), "A")
    r = d.restrict([ColumnKey("B", 2)])
    np.testing.assert_array_equal(r.X[:, 0], d.X[:, 3])
    np.testing.assert_array_equal(r.y, d.y)
    with pytest.raises(KeyError):
        d.restrict([ColumnKey("C", 1)])
