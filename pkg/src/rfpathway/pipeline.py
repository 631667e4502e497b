"""End-to-end driver: ingest, preprocess, fit, prune, refit, graph."""

from __future__ import annotations

import json
import logging
import platform
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig
from .data import (
    GLOBE,
    PINATUBO_BANDS,
    DataError,
    EnsembleSet,
    FeatureCollection,
    counterfactual_difference,
    load_ensemble_csv,
    load_grid_csv,
    normalize_minmax,
    window,
    zonal_average,
)
from .forest import fit
from .lags import build_design
from .metrics import FitReport, passes_fit_gate
from .parallel import run_jobs
from .pathway import (
    EdgeTable,
    RefitResult,
    aggregate_edges,
    build_graph,
    export,
    prune,
    refit_and_score,
    write_edge_csv,
)
from .shap import aggregate_importance
from .synth import generate

log = logging.getLogger(__name__)


class GateFailure(RuntimeError):
    """Raised in strict-gate mode when a fit misses the goodness-of-fit gate."""


@dataclass
class StageTimer:
    timings: dict[str, float] = field(default_factory=dict)

    @contextmanager
    def stage(self, name: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.timings[name] = round(time.perf_counter() - t0, 6)


@dataclass
class FitResult:
    table: EdgeTable
    reports: dict[str, list[FitReport]]
    gate_failures: list[dict]


@dataclass
class PipelineResult:
    data: EnsembleSet
    fit: FitResult
    pruned: EdgeTable
    refit: RefitResult | None
    files: dict[str, Path]
    manifest: dict


# ---------------------------------------------------------------------------
# data


def _grid_to_ensemble(path, cfg: RunConfig) -> EnsembleSet:
    grids = load_grid_csv(path)
    if cfg.preprocess.spatial == "none":
        raise DataError("grid input needs preprocess.spatial = 'global' or 'zonal'")
    bands = GLOBE if cfg.preprocess.spatial == "global" else PINATUBO_BANDS
    return EnsembleSet(tuple(
        zonal_average(g, bands, cfg.preprocess.area_weighted) for _, g in sorted(grids.items())
    ))


def load_input(cfg: RunConfig) -> EnsembleSet:
    """Raw (pre-differencing) ensembles named by the config."""
    if cfg.data.source == "synthetic":
        return generate(cfg.synth_config())
    if not cfg.data.forced:
        raise DataError("data.forced is required for file input")
    loader = load_ensemble_csv if cfg.data.schema == "long" else lambda p: _grid_to_ensemble(p, cfg)
    forced = loader(cfg.data.forced)
    if cfg.preprocess.difference:
        if not cfg.data.counterfactual:
            raise DataError("preprocess.difference is set but data.counterfactual is missing")
        return counterfactual_difference(forced, loader(cfg.data.counterfactual))
    return forced


def preprocess(ens: EnsembleSet, cfg: RunConfig) -> EnsembleSet:
    """Window then normalize each member (differencing happens at load time)."""
    pp = cfg.preprocess
    if pp.window is not None:
        start, length = pp.window
        ens = ens.map(lambda m: window(m, start, length))
    if pp.normalize:
        ens = ens.map(normalize_minmax)
    return ens


def prepare(cfg: RunConfig) -> EnsembleSet:
    return preprocess(load_input(cfg), cfg)


# ---------------------------------------------------------------------------
# fitting


def _fit_one(member: FeatureCollection, lags, target: str, config, member_id: int):
    design = build_design(member, lags, target)
    forest = fit(design, config, member=member_id)
    report = FitReport.compute_or_none(design.y, forest.predict_batch(design.X), design.n_columns)
    return report, aggregate_importance(forest, design)


def _targets(ens: EnsembleSet, cfg: RunConfig) -> list[str]:
    if cfg.targets is None:
        return list(ens.names)
    missing = [t for t in cfg.targets if t not in ens.names]
    if missing:
        raise DataError(f"targets {missing} are not features of the input ({ens.names})")
    return list(cfg.targets)


def _gate(reports: dict[str, list[FitReport]], cfg: RunConfig, stage: str) -> list[dict]:
    failures = []
    for tgt, per_member in reports.items():
        for r, rep in enumerate(per_member):
            if rep is None:
                continue  # constant target: nothing to score
            if not passes_fit_gate(rep, cfg.gate.r2_min, cfg.gate.rmse_max):
                failures.append({"stage": stage, "target": tgt, "member": r,
                                 "r2_adj": rep.r2_adj, "rmse": rep.rmse})
    for f in failures:
        log.warning("%s fit for %s (member %d) misses the gate: R2_adj=%.4f RMSE=%.4f",
                    f["stage"], f["target"], f["member"], f["r2_adj"], f["rmse"])
    if failures and cfg.gate.strict:
        raise GateFailure(f"{len(failures)} {stage} fit(s) miss the goodness-of-fit gate")
    return failures


def fit_edges(ens: EnsembleSet, cfg: RunConfig) -> FitResult:
    """One forest per (member, target); aggregated unpruned edge table."""
    lags = cfg.lag_spec
    targets = _targets(ens, cfg)
    config = cfg.forest_config()
    jobs = [(m, lags, tgt, config, r) for r, m in enumerate(ens.members) for tgt in targets]
    results = run_jobs(_fit_one, jobs, cfg.workers)
    per_member: list[dict] = [dict() for _ in ens.members]
    reports: dict[str, list[FitReport]] = {t: [] for t in targets}
    for (_, _, tgt, _, r), (report, iv) in zip(jobs, results):
        per_member[r][tgt] = iv
        reports[tgt].append(report)
    failures = _gate(reports, cfg, "initial")
    return FitResult(aggregate_edges(per_member, ens.R, lags), reports, failures)


def prune_and_refit(ens: EnsembleSet | None, table: EdgeTable, cfg: RunConfig, refit: bool = True):
    pruned = prune(table, cfg.prune.delta, cfg.prune.top_k, cfg.prune.rule_order)
    if not refit or ens is None:
        return pruned, None, []
    targets = _targets(ens, cfg)
    result = refit_and_score(ens.members, cfg.lag_spec, pruned, cfg.forest_config(),
                             targets=targets, workers=cfg.workers)
    failures = _gate(result.reports, cfg, "refit")
    return pruned, result, failures


# ---------------------------------------------------------------------------
# outputs


def _versions() -> dict:
    import numba

    return {"rfpathway": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "numba": numba.__version__}


def _reports_json(reports: dict[str, list[FitReport | None]]) -> dict:
    out = {}
    for tgt, per_member in reports.items():
        scored = [r for r in per_member if r is not None]
        entry = {"members": [r.to_dict() if r is not None else None for r in per_member]}
        if scored:
            r2a = [r.r2_adj for r in scored]
            rm = [r.rmse for r in scored]
            entry.update({"r2_adj_mean": float(np.mean(r2a)), "r2_adj_sigma": float(np.std(r2a)),
                          "rmse_mean": float(np.mean(rm)), "rmse_sigma": float(np.std(rm))})
        out[tgt] = entry
    return out


def _degenerate(reports: dict[str, list[FitReport | None]]) -> list[str]:
    return [t for t, per_member in reports.items() if any(r is None for r in per_member)]


def graph_meta(cfg: RunConfig, R: int) -> dict:
    return {"R": R, "lags": list(cfg.lags), "delta": cfg.prune.delta, "top_k": cfg.prune.top_k,
            "rule_order": cfg.prune.rule_order}


def write_graph_files(table: EdgeTable, nodes, cfg: RunConfig, out: Path) -> dict[str, Path]:
    graph = build_graph(table, nodes, cfg.display.drop_self_loops, cfg.display.per_target_cap)
    return {
        "graph.dot": export(graph, "dot", out / "graph.dot"),
        "graph.json": export(graph, "json", out / "graph.json", graph_meta(cfg, table.R)),
    }


def write_manifest(out: Path, cfg: RunConfig, command: str, timer: StageTimer, extra: dict) -> Path:
    manifest = {
        "command": command,
        "config": cfg.to_dict(),
        "config_sha256": cfg.digest(),
        "seed": cfg.seed,
        "versions": _versions(),
        "timings_s": timer.timings,
        **extra,
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return path


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def run_fit(cfg: RunConfig) -> tuple[EnsembleSet, FitResult, dict[str, Path]]:
    timer = StageTimer()
    out = _out_dir(cfg)
    with timer.stage("ingest_preprocess"):
        ens = prepare(cfg)
    with timer.stage("fit"):
        result = fit_edges(ens, cfg)
    files = {"edges_unpruned.csv": out / "edges_unpruned.csv"}
    write_edge_csv(result.table, files["edges_unpruned.csv"])
    files["manifest.json"] = write_manifest(out, cfg, "fit", timer, {
        "R": ens.R, "features": ens.names, "K": ens.K,
        "fit_reports": _reports_json(result.reports),
        "gate_failures": result.gate_failures,
        "constant_targets": _degenerate(result.reports),
    })
    return ens, result, files


def run_pipeline(cfg: RunConfig) -> PipelineResult:
    timer = StageTimer()
    out = _out_dir(cfg)
    with timer.stage("ingest_preprocess"):
        ens = prepare(cfg)
    with timer.stage("fit"):
        fitted = fit_edges(ens, cfg)
    with timer.stage("prune_refit"):
        pruned, refit, refit_failures = prune_and_refit(ens, fitted.table, cfg)
    files = {}
    files["edges_unpruned.csv"] = out / "edges_unpruned.csv"
    write_edge_csv(fitted.table, files["edges_unpruned.csv"])
    files["edges_pruned_prerefit.csv"] = out / "edges_pruned_prerefit.csv"
    write_edge_csv(pruned, files["edges_pruned_prerefit.csv"])
    final = refit.table if refit is not None else pruned
    files["edges_pruned.csv"] = out / "edges_pruned.csv"
    write_edge_csv(final, files["edges_pruned.csv"])
    with timer.stage("graph"):
        files.update(write_graph_files(final, ens.names, cfg, out))
    manifest_extra = {
        "R": ens.R, "features": ens.names, "K": ens.K,
        "fit_reports": _reports_json(fitted.reports),
        "refit_reports": _reports_json(refit.reports) if refit else {},
        "null_pathway_targets": list(refit.null_targets) if refit else [],
        "gate_failures": fitted.gate_failures + refit_failures,
        "constant_targets": _degenerate(fitted.reports),
        "edge_counts": {"unpruned": len(fitted.table), "pruned": len(final)},
    }
    files["manifest.json"] = write_manifest(out, cfg, "pipeline", timer, manifest_extra)
    manifest = json.loads(files["manifest.json"].read_text())
    return PipelineResult(ens, fitted, pruned, refit, files, manifest)
