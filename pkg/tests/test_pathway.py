import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import expected_edges, fixture_path
from rfpathway.data import EnsembleSet
from rfpathway.forest import ForestConfig, fit
from rfpathway.lags import PINATUBO_LAGS, ColumnKey, LagSpec, build_design
from rfpathway.metrics import FitReport
from rfpathway.pathway import (
    EdgeRecord,
    EdgeTable,
    RuleOrder,
    aggregate_edges,
    build_graph,
    export,
    prune,
    read_edge_csv,
    refit_and_score,
    to_dot,
    to_json,
    weight_color,
    write_edge_csv,
)
from rfpathway.shap import ImportanceVector, aggregate_importance
from rfpathway.synth import SynthConfig, generate

TABLE3 = [("X", "X", 0.243, 0.014), ("X", "Z", 0.225, 0.014), ("W", "Y", 0.229, 0.010),
          ("W", "W", 0.240, 0.016), ("Y", "Z", 0.051, 0.009), ("W", "X", 0.027, 0.004)]


def table3() -> EdgeTable:
    return EdgeTable(tuple(EdgeRecord(s, t, 1, w, sd, 5) for s, t, w, sd in TABLE3), 5)


def appendix(name: str) -> EdgeTable:
    return read_edge_csv(fixture_path(f"appendix_{name}.csv"), 5, PINATUBO_LAGS)


def iv(weights):
    return ImportanceVector((ColumnKey("a", 1),), np.array(weights, float))


# --- aggregation --------------------------------------------------------------

def test_aggregate_single_member():
    t = aggregate_edges([{"b": iv([0.3])}])
    (r,) = t.records
    assert (r.mean_weight, r.weight_sigma, r.ensembles_with_edge) == (0.3, 0.0, 1)


def test_aggregate_two_members():
    (r,) = aggregate_edges([{"b": iv([0.2])}, {"b": iv([0.3])}]).records
    assert r.mean_weight == pytest.approx(0.25, abs=1e-15)
    assert r.weight_sigma == pytest.approx(0.05, abs=1e-15)
    assert r.ensembles_with_edge == 2


def test_aggregate_counts_positive_members():
    (r,) = aggregate_edges([{"b": iv([w])} for w in (0, 0, 0.3, 0.3, 0.3)]).records
    assert r.ensembles_with_edge == 3


def test_aggregate_rejects_inconsistent_members():
    with pytest.raises(ValueError):
        aggregate_edges([{"b": iv([0.1])}, {"c": iv([0.1])}])
    with pytest.raises(ValueError):
        aggregate_edges([{"b": iv([0.1])}], R=2)


def test_edge_table_validation():
    with pytest.raises(ValueError, match="duplicate"):
        EdgeTable((EdgeRecord("a", "b", 1, 0.1, 0, 1),) * 2, 1)
    with pytest.raises(ValueError):
        EdgeTable((EdgeRecord("a", "b", 1, 0.1, 0, 3),), 2)
    with pytest.raises(ValueError):
        EdgeTable((EdgeRecord("a", "b", 2, 0.1, 0, 1),), 1, LagSpec((1,)))


# --- pruning fixtures ---------------------------------------------------------

@pytest.mark.parametrize("fixture,expected", [("a1", "table7"), ("a2", "table9")])
def test_prune_reproduces_global_tables(fixture, expected):
    assert prune(appendix(fixture)).keys() == expected_edges(expected)


def test_table7_edge_list():
    assert prune(appendix("a1")).keys() == {
        ("Globe_T050", "Globe_T050", 1), ("Globe_FLNTC", "Globe_FLNTC", 1),
        ("Globe_AEROD_v", "Globe_AEROD_v", 1), ("Globe_T050", "Globe_FLNTC", 1),
        ("Globe_AEROD_v", "Globe_FLNTC", 6), ("Globe_FLNTC", "Globe_AEROD_v", 31),
        ("Globe_FLNTC", "Globe_T050", 36),
    }


def test_table9_details():
    keys = prune(appendix("a2")).keys()
    assert ("Globe_FSDSC", "Globe_AEROD_v", 21) in keys
    assert not any(s == "Globe_AEROD_v" and t == "Globe_TREFHT" for s, t, _ in keys)


@pytest.mark.parametrize("fixture,expected", [("a3", "table8"), ("a4", "table12")])
def test_prune_zonal_fixtures(fixture, expected):
    table = appendix(fixture)
    pruned = prune(table)
    _check_invariants(table, pruned, 1e-4, 4)
    assert pruned.keys() == expected_edges(expected)


def test_only_default_rule_order_reproduces_all_tables():
    pairs = [("a1", "table7"), ("a2", "table9"), ("a3", "table8"), ("a4", "table12")]
    hits = {order: all(prune(appendix(a), rule_order=order).keys() == expected_edges(t) for a, t in pairs)
            for order in RuleOrder}
    assert hits == {RuleOrder.COLLAPSE_FILTER_TOPK: True, RuleOrder.COLLAPSE_TOPK_FILTER: False,
                    RuleOrder.TOPK_COLLAPSE_FILTER: False}


def test_delta_threshold():
    one = lambda w: EdgeTable((EdgeRecord("a", "b", 1, w, 1e-4 if w > 1e-4 else 0, 5),), 5)
    assert len(prune(one(2e-4))) == 1
    assert len(prune(one(5e-5))) == 0


def test_prune_empty_table():
    assert len(prune(EdgeTable((), 5))) == 0


# --- pruning properties -------------------------------------------------------

def _check_invariants(table, pruned, delta, k):
    assert pruned.keys() <= table.keys()
    R = table.R
    pairs = set()
    for r in pruned.records:
        assert r.mean_weight > delta
        assert r.weight_sigma <= r.mean_weight
        assert r.ensembles_with_edge >= R // 2 + 1
        assert (r.source, r.target) not in pairs
        pairs.add((r.source, r.target))
    for tgt in {r.target for r in pruned.records}:
        assert len(pruned.incoming(tgt)) <= k
    w = [r.mean_weight for r in pruned.records]
    assert w == sorted(w, reverse=True)


names = st.sampled_from(["A", "B", "C", "D", "E"])
record = st.tuples(names, names, st.sampled_from([1, 2, 3]),
                   st.floats(0, 0.3), st.floats(0, 0.3), st.integers(0, 5))


@settings(max_examples=300)
@given(st.lists(record, max_size=60, unique_by=lambda r: r[:3]), st.integers(1, 5),
       st.sampled_from([0.0, 1e-4, 0.05]))
def test_prune_properties(rows, k, delta):
    table = EdgeTable(tuple(EdgeRecord(*r) for r in rows), 5)
    pruned = prune(table, delta, k)
    _check_invariants(table, pruned, delta, k)
    assert prune(pruned, delta, k).keys() == pruned.keys()


@settings(max_examples=100)
@given(st.lists(record, max_size=40, unique_by=lambda r: r[:3]), st.randoms())
def test_prune_ignores_input_order_without_ties(rows, rnd):
    weights = [r[3] for r in rows]
    if len(set(weights)) != len(weights):
        return
    shuffled = list(rows)
    rnd.shuffle(shuffled)
    a = prune(EdgeTable(tuple(EdgeRecord(*r) for r in rows), 5))
    b = prune(EdgeTable(tuple(EdgeRecord(*r) for r in shuffled), 5))
    assert a.records == b.records


# --- refit --------------------------------------------------------------------

@pytest.fixture(scope="module")
def small_ensemble() -> EnsembleSet:
    return generate(SynthConfig(n_ensembles=2, length=80, seed=5))


def _fit_all(ens, lags, cfg):
    per_member, reports = [], {}
    for r, m in enumerate(ens.members):
        row = {}
        for tgt in ens.names:
            d = build_design(m, lags, tgt)
            f = fit(d, cfg, member=r)
            reports.setdefault(tgt, []).append(FitReport.compute(d.y, f.predict_batch(d.X), d.n_columns))
            row[tgt] = aggregate_importance(f, d)
        per_member.append(row)
    return aggregate_edges(per_member, ens.R, lags), reports


def test_refit_on_full_table_repeats_fit(small_ensemble):
    lags, cfg = LagSpec((1, 2)), ForestConfig(n_trees=4, seed=1)
    table, reports = _fit_all(small_ensemble, lags, cfg)
    res = refit_and_score(small_ensemble.members, lags, table, cfg)
    assert res.reports == reports
    assert res.null_targets == ()
    np.testing.assert_allclose(sorted(r.mean_weight for r in res.table),
                               sorted(r.mean_weight for r in table), rtol=0, atol=0)


def test_refit_single_column_and_null_target(small_ensemble):
    lags, cfg = LagSpec((1, 2)), ForestConfig(n_trees=3)
    pruned = EdgeTable((EdgeRecord("X", "X", 1, 0.2, 0.01, 2),), 2, lags)
    res = refit_and_score(small_ensemble.members, lags, pruned, cfg)
    assert set(res.null_targets) == {"W", "Y", "Z"}
    assert [rep.p for rep in res.reports["X"]] == [1, 1]
    assert res.table.keys() == {("X", "X", 1)}


def test_refit_independent_of_workers(small_ensemble):
    lags, cfg = LagSpec((1,)), ForestConfig(n_trees=3)
    pruned = EdgeTable((EdgeRecord("W", "X", 1, 0.1, 0.01, 2), EdgeRecord("X", "X", 1, 0.2, 0.01, 2)), 2, lags)
    a = refit_and_score(small_ensemble.members, lags, pruned, cfg, workers=1)
    b = refit_and_score(small_ensemble.members, lags, pruned, cfg, workers=2)
    assert a.reports == b.reports and a.table == b.table


# --- graphs and export --------------------------------------------------------

def test_table3_graph_and_dot():
    g = build_graph(table3())
    assert g.edge_keys() == {("W", "W", 1), ("W", "X", 1), ("W", "Y", 1),
                             ("X", "X", 1), ("X", "Z", 1), ("Y", "Z", 1)}
    dot = to_dot(g)
    assert dot.startswith("digraph pathway {") and dot.rstrip().endswith("}")
    assert dot.count(" -> ") == 6 and dot.count('label="1"') == 6
    assert sum(1 for line in dot.splitlines() if line.strip().startswith('"') and "->" not in line) == 4


def test_empty_graph():
    g = build_graph(EdgeTable((), 5))
    assert g.nodes == () and g.edges == ()
    assert to_dot(g) == 'digraph pathway {\n  rankdir=LR;\n  node [shape=circle];\n}\n'
    assert json.loads(to_json(g)) == {"nodes": [], "edges": [], "meta": {}}
    g2 = build_graph(EdgeTable((), 5), nodes=["a", "b"])
    assert g2.nodes == ("a", "b") and not g2.edges


def test_drop_self_loops_on_table7():
    g = build_graph(prune(appendix("a1")), drop_self_loops=True)
    assert len(g.edges) == 4 and all(e.source != e.target for e in g.edges)


def test_display_cap():
    g = build_graph(table3(), per_target_display_cap=1)
    assert g.edge_keys() == {("X", "X", 1), ("W", "W", 1), ("W", "Y", 1), ("X", "Z", 1)}


def test_color_ramp():
    assert weight_color(1.0, 0.01, 1.0) == "#1f3ca8"
    assert weight_color(0.01, 0.01, 1.0) == "#f2c91c"
    assert weight_color(0.5, 0.5, 0.5) == "#1f3ca8"


def test_json_document():
    doc = json.loads(to_json(build_graph(table3()), {"R": 5}))
    assert doc["meta"] == {"R": 5}
    assert doc["edges"][0] == {"source": "X", "target": "X", "lag": 1, "weight": 0.243,
                               "sigma": 0.014, "ensembles": 5}


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    recs = tuple(EdgeRecord(s, t, 1, float(rng.random() / 7), float(rng.random() / 70), 4)
                 for s in "ab" for t in "ab")
    table = EdgeTable(recs, 5)
    p = tmp_path / "e.csv"
    write_edge_csv(table, p)
    assert read_edge_csv(p, 5) == table


def test_export_formats(tmp_path):
    t = table3()
    assert export(t, "csv", tmp_path / "e.csv").read_text().startswith("source,target,lag,shap_weight")
    assert "digraph" in export(t, "dot", tmp_path / "g.dot").read_text()
    assert json.loads(export(t, "json", tmp_path / "g.json").read_text())["edges"]
    with pytest.raises(ValueError):
        export(t, "png", tmp_path / "g.png")


def test_read_edge_csv_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,b\n")
    with pytest.raises(ValueError, match="header"):
        read_edge_csv(p, 5)
    p.write_text("source,target,lag,shap_weight,weight_sigma,ensembles_with_edge\nA,B,x,1,1,1\n")
    with pytest.raises(ValueError, match=":2"):
        read_edge_csv(p, 5)
