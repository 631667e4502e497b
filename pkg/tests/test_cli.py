import csv
import json

import numpy as np
import pytest

from conftest import expected_edges, fixture_path
from rfpathway.cli import EXIT_CONFIG, EXIT_GATE, EXIT_INGEST, EXIT_IO, main
from rfpathway.data import load_ensemble_csv
from rfpathway.synth import SynthConfig, generate
from rfpathway.data import write_ensemble_csv

SMALL = {"preset": "synthetic", "synth": {"n_ensembles": 2, "length": 90}, "forest": {"n_trees": 4}}


@pytest.fixture
def small_cfg(tmp_path):
    p = tmp_path / "small.json"
    p.write_text(json.dumps(SMALL))
    return p


def _keys(path):
    with open(path, newline="") as fh:
        return {(r["source"], r["target"], int(r["lag"])) for r in csv.DictReader(fh)}


def test_synth_default_rows_and_bytes(tmp_path):
    assert main(["synth", "--preset", "synthetic", "--out-dir", str(tmp_path / "a")]) == 0
    assert main(["synth", "--preset", "synthetic", "--out-dir", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "synthetic.csv").read_bytes()
    assert a == (tmp_path / "b" / "synthetic.csv").read_bytes()
    assert a.count(b"\n") == 1 + 5 * 4 * 750
    assert load_ensemble_csv(tmp_path / "a" / "synthetic.csv").R == 5


def test_synth_zero_noise(tmp_path):
    out = tmp_path / "z"
    assert main(["synth", "--preset", "synthetic", "--out-dir", str(out),
                 "--set", "synth.noise_half_width=0", "--set", "synth.length=20"]) == 0
    ens = load_ensemble_csv(out / "synthetic.csv")
    assert all(np.all(m.as_matrix() == 0) for m in ens.members)


def test_fit_writes_table_and_manifest(tmp_path, small_cfg):
    out = tmp_path / "fit"
    assert main(["fit", "--config", str(small_cfg), "--out-dir", str(out)]) == 0
    header = (out / "edges_unpruned.csv").read_text().splitlines()[0]
    assert header == "source,target,lag,shap_weight,weight_sigma,ensembles_with_edge"
    assert len((out / "edges_unpruned.csv").read_text().splitlines()) == 1 + 4 * 4 * 5
    m = json.loads((out / "manifest.json").read_text())
    assert len(m["config_sha256"]) == 64
    assert set(m["fit_reports"]) == {"W", "X", "Y", "Z"}
    assert len(m["fit_reports"]["W"]["members"]) == 2
    assert {"python", "numpy", "numba"} <= set(m["versions"])
    # rerun: identical bytes
    again = tmp_path / "fit2"
    assert main(["fit", "--config", str(small_cfg), "--out-dir", str(again)]) == 0
    assert (out / "edges_unpruned.csv").read_bytes() == (again / "edges_unpruned.csv").read_bytes()


def test_strict_gate_exit(tmp_path, small_cfg):
    code = main(["fit", "--config", str(small_cfg), "--out-dir", str(tmp_path),
                 "--strict-gate", "--set", "gate.r2_min=1.01"])
    assert code == EXIT_GATE


def test_advisory_gate_continues(tmp_path, small_cfg):
    code = main(["fit", "--config", str(small_cfg), "--out-dir", str(tmp_path), "--set", "gate.r2_min=1.01"])
    assert code == 0
    assert json.loads((tmp_path / "manifest.json").read_text())["gate_failures"]


def test_prune_fixture_to_table7(tmp_path):
    out = tmp_path / "p"
    assert main(["prune", "--edges", str(fixture_path("appendix_a1.csv")), "--ensembles", "5",
                 "--out-dir", str(out)]) == 0
    assert _keys(out / "edges_pruned.csv") == expected_edges("table7")
    assert (out / "graph.dot").read_text().count(" -> ") == 7
    assert json.loads((out / "graph.json").read_text())["meta"]["R"] == 5
    # pruning the pruned table changes nothing
    out2 = tmp_path / "p2"
    assert main(["prune", "--edges", str(out / "edges_pruned.csv"), "--ensembles", "5",
                 "--out-dir", str(out2)]) == 0
    assert (out / "edges_pruned.csv").read_bytes() == (out2 / "edges_pruned.csv").read_bytes()


def test_prune_empty_input(tmp_path):
    src = tmp_path / "empty.csv"
    src.write_text("source,target,lag,shap_weight,weight_sigma,ensembles_with_edge\n")
    assert main(["prune", "--edges", str(src), "--ensembles", "5", "--out-dir", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "edges_pruned.csv").read_text().count("\n") == 1
    assert json.loads((tmp_path / "o" / "graph.json").read_text())["edges"] == []


def test_prune_with_refit_reads_r_from_manifest(tmp_path, small_cfg):
    out = tmp_path / "r"
    assert main(["fit", "--config", str(small_cfg), "--out-dir", str(out)]) == 0
    assert main(["prune", "--config", str(small_cfg), "--out-dir", str(out)]) == 0
    m = json.loads((out / "manifest.json").read_text())
    assert m["refit"] and m["refit_reports"]
    assert _keys(out / "edges_pruned.csv") == _keys(out / "edges_pruned_prerefit.csv")


def test_prune_needs_ensemble_count(tmp_path):
    assert main(["prune", "--edges", str(fixture_path("appendix_a1.csv")),
                 "--out-dir", str(tmp_path)]) == EXIT_CONFIG


def test_pipeline_null_pathway(tmp_path):
    data = tmp_path / "forced.csv"
    write_ensemble_csv(generate(SynthConfig(n_ensembles=2, length=60)), data)
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"lags": [1, 2], "preprocess": {"window": [1, 50]},
                               "forest": {"n_trees": 3}}))
    out = tmp_path / "o"
    assert main(["pipeline", "--config", str(cfg), "--forced", str(data), "--counterfactual", str(data),
                 "--out-dir", str(out)]) == 0
    m = json.loads((out / "manifest.json").read_text())
    assert m["null_pathway_targets"] == ["W", "X", "Y", "Z"]
    assert m["edge_counts"]["pruned"] == 0
    assert len(m["config_sha256"]) == 64
    assert "->" not in (out / "graph.dot").read_text()


def test_pipeline_outputs(tmp_path, small_cfg):
    out = tmp_path / "o"
    assert main(["pipeline", "--config", str(small_cfg), "--out-dir", str(out), "--seed", "2"]) == 0
    for name in ("edges_unpruned.csv", "edges_pruned.csv", "edges_pruned_prerefit.csv",
                 "graph.dot", "graph.json", "manifest.json"):
        assert (out / name).is_file()
    m = json.loads((out / "manifest.json").read_text())
    assert m["seed"] == 2 and set(m["timings_s"]) >= {"fit", "prune_refit"}


def test_export(tmp_path):
    out = tmp_path / "x"
    for fmt in ("dot", "json", "csv"):
        assert main(["export", "--edges", str(fixture_path("appendix_a2.csv")), "--ensembles", "5",
                     "--format", fmt, "--out-dir", str(out)]) == 0
    assert (out / "graph.dot").read_text().startswith("digraph pathway {")
    assert len(json.loads((out / "graph.json").read_text())["edges"]) == 108


@pytest.mark.parametrize("argv,code", [
    (["fit", "--config", "/nonexistent/c.json"], EXIT_CONFIG),
    (["fit", "--set", "bogus=1"], EXIT_CONFIG),
    (["fit", "--set", "prune.rule_order=\"nope\""], EXIT_CONFIG),
    (["fit"], EXIT_INGEST),
    (["fit", "--forced", "/nonexistent/f.csv", "--set", "preprocess.difference=false"], EXIT_INGEST),
])
def test_error_exit_codes(tmp_path, argv, code):
    assert main(argv + ["--out-dir", str(tmp_path)]) == code


def test_bad_csv_exit_code(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("ensemble,feature,t,value\n1,A,1,0\n1,A,2,inf\n")
    assert main(["fit", "--forced", str(bad), "--set", "preprocess.difference=false",
                 "--out-dir", str(tmp_path)]) == EXIT_INGEST


def test_io_error_exit_code(tmp_path, small_cfg):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["synth", "--config", str(small_cfg), "--out-dir", str(blocker / "sub")]) == EXIT_IO


def test_distinct_exit_codes():
    assert len({EXIT_CONFIG, EXIT_INGEST, EXIT_GATE, EXIT_IO, 0}) == 5
