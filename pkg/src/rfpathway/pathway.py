"""Edge tables, pruning, refitting and pathway graphs.

An edge ``source -> target @ lag`` carries the ensemble mean of the
per-member mean-|SHAP| weights of design column ``(source, lag)`` in the
forest predicting ``target``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .data import FeatureCollection
from .forest import ForestConfig, fit
from .lags import ColumnKey, LagSpec, build_design
from .metrics import FitReport
from .shap import ImportanceVector, aggregate_importance

EDGE_HEADER = ("source", "target", "lag", "shap_weight", "weight_sigma", "ensembles_with_edge")
DEFAULT_DELTA = 1e-4
DEFAULT_TOP_K = 4


class RuleOrder(str, Enum):
    """Order in which the pruning rules are applied.

    ``collapse-filter-topk`` (default): best lag per pair, then the
    delta/sigma/majority filters, then top-k per target.
    ``collapse-topk-filter`` and ``topk-collapse-filter`` exist so alternative
    readings can be compared against the published tables.
    """

    COLLAPSE_FILTER_TOPK = "collapse-filter-topk"
    COLLAPSE_TOPK_FILTER = "collapse-topk-filter"
    TOPK_COLLAPSE_FILTER = "topk-collapse-filter"


@dataclass(frozen=True)
class EdgeRecord:
    source: str
    target: str
    lag: int
    mean_weight: float
    weight_sigma: float
    ensembles_with_edge: int

    @property
    def key(self) -> tuple[str, str, int]:
        return (self.source, self.target, self.lag)


def _sort_desc(records: Iterable[EdgeRecord]) -> list[EdgeRecord]:
    # stable: equal weights keep their incoming order
    return sorted(records, key=lambda r: -r.mean_weight)


@dataclass(frozen=True)
class EdgeTable:
    records: tuple[EdgeRecord, ...]
    R: int
    lags: LagSpec | None = None

    def __post_init__(self):
        keys = [r.key for r in self.records]
        if len(set(keys)) != len(keys):
            raise ValueError("duplicate (source, target, lag) in edge table")
        for r in self.records:
            if not 0 <= r.ensembles_with_edge <= self.R:
                raise ValueError(f"{r.key}: ensembles_with_edge outside [0, {self.R}]")
            if r.mean_weight < 0 or r.weight_sigma < 0:
                raise ValueError(f"{r.key}: negative weight or sigma")
            if self.lags is not None and r.lag not in self.lags:
                raise ValueError(f"{r.key}: lag not in lag set")
        object.__setattr__(self, "records", tuple(self.records))

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def keys(self) -> set[tuple[str, str, int]]:
        return {r.key for r in self.records}

    def incoming(self, target: str) -> list[EdgeRecord]:
        return [r for r in self.records if r.target == target]

    def sorted(self) -> "EdgeTable":
        return replace(self, records=tuple(_sort_desc(self.records)))

    def with_records(self, records: Iterable[EdgeRecord]) -> "EdgeTable":
        return replace(self, records=tuple(records))


# ---------------------------------------------------------------------------
# aggregation


def aggregate_edges(per_ensemble: Sequence[Mapping[str, ImportanceVector]], R: int | None = None,
                    lags: LagSpec | None = None) -> EdgeTable:
    """Combine per-member importances (``[{target: ImportanceVector}]``) into one table.

    Mean and population standard deviation over members; the count is the
    number of members with a strictly positive weight.
    """
    R = len(per_ensemble) if R is None else R
    if len(per_ensemble) != R or R < 1:
        raise ValueError(f"expected {R} members, got {len(per_ensemble)}")
    targets = list(per_ensemble[0])
    for r, member in enumerate(per_ensemble):
        if list(member) != targets:
            raise ValueError(f"member {r} has targets {list(member)}, expected {targets}")
        for tgt in targets:
            if member[tgt].columns != per_ensemble[0][tgt].columns:
                raise ValueError(f"member {r} target {tgt}: inconsistent column keys")
    records = []
    for tgt in targets:
        cols = per_ensemble[0][tgt].columns
        W = np.vstack([member[tgt].weights for member in per_ensemble])  # R x columns
        for j, col in enumerate(cols):
            w = W[:, j]
            mean = math.fsum(w) / R
            sigma = math.sqrt(math.fsum((w - mean) ** 2) / R)
            records.append(EdgeRecord(col.source, tgt, col.lag, mean, sigma, int(np.count_nonzero(w > 0))))
    return EdgeTable(tuple(_sort_desc(records)), R, lags)


# ---------------------------------------------------------------------------
# pruning


def _collapse_lags(records: Sequence[EdgeRecord]) -> list[EdgeRecord]:
    """Keep the heaviest lag of every (source, target) pair; ties go to the earlier record."""
    best: dict[tuple[str, str], EdgeRecord] = {}
    for r in records:
        cur = best.get((r.source, r.target))
        if cur is None or r.mean_weight > cur.mean_weight:
            best[(r.source, r.target)] = r
    keep = {id(r) for r in best.values()}
    return [r for r in records if id(r) in keep]


def _filter(records: Sequence[EdgeRecord], R: int, delta: float) -> list[EdgeRecord]:
    majority = R // 2 + 1
    return [
        r for r in records
        if r.mean_weight > delta and r.weight_sigma <= r.mean_weight and r.ensembles_with_edge >= majority
    ]


def _top_k(records: Sequence[EdgeRecord], k: int) -> list[EdgeRecord]:
    by_target: dict[str, list[EdgeRecord]] = {}
    for r in records:
        by_target.setdefault(r.target, []).append(r)
    keep = set()
    for incoming in by_target.values():
        ranked = sorted(incoming, key=lambda r: (-r.mean_weight, r.lag, r.source))
        keep.update(id(r) for r in ranked[:k])
    return [r for r in records if id(r) in keep]


def prune(table: EdgeTable, delta: float = DEFAULT_DELTA, top_k: int = DEFAULT_TOP_K,
          rule_order: RuleOrder | str = RuleOrder.COLLAPSE_FILTER_TOPK) -> EdgeTable:
    """Drop weak, unstable and minority edges; keep at most ``top_k`` per target."""
    order = RuleOrder(rule_order)
    recs = list(table.records)
    if order is RuleOrder.COLLAPSE_FILTER_TOPK:
        recs = _top_k(_filter(_collapse_lags(recs), table.R, delta), top_k)
    elif order is RuleOrder.COLLAPSE_TOPK_FILTER:
        recs = _filter(_top_k(_collapse_lags(recs), top_k), table.R, delta)
    else:
        recs = _filter(_collapse_lags(_top_k(recs, top_k)), table.R, delta)
    return table.with_records(_sort_desc(recs))


# ---------------------------------------------------------------------------
# refit


@dataclass(frozen=True)
class RefitResult:
    """Per-target refit outcome.

    ``reports[target]`` holds one FitReport per member; targets without any
    surviving incoming edge are listed in ``null_targets`` instead.
    """

    reports: dict[str, list[FitReport]]
    table: EdgeTable
    null_targets: tuple[str, ...] = ()


def refit_and_score(members: Sequence[FeatureCollection], lags: LagSpec, pruned: EdgeTable,
                    config: ForestConfig, targets: Sequence[str] | None = None,
                    member_ids: Sequence[int] | None = None, workers: int = 1) -> RefitResult:
    """Retrain each target on only its surviving incoming columns and re-score it."""
    from .parallel import run_jobs

    targets = list(members[0].names if targets is None else targets)
    member_ids = list(range(len(members)) if member_ids is None else member_ids)
    jobs = []
    null = []
    keep_by_target = {}
    for tgt in targets:
        keep = [ColumnKey(r.source, r.lag) for r in pruned.records if r.target == tgt]
        if not keep:
            null.append(tgt)
            continue
        # design column order, so results do not depend on table order
        keep_set = set(keep)
        keep = [c for c in build_design(members[0], lags, tgt).columns if c in keep_set]
        keep_by_target[tgt] = keep
        for r, m in zip(member_ids, members):
            jobs.append((m, lags, tgt, tuple(keep), config, r))
    results = run_jobs(_fit_restricted, jobs, workers)

    reports: dict[str, list[FitReport]] = {}
    per_member: list[dict[str, ImportanceVector]] = [dict() for _ in members]
    pos = {r: i for i, r in enumerate(member_ids)}
    for (m, _, tgt, _, _, r), (report, iv) in zip(jobs, results):
        reports.setdefault(tgt, []).append(report)
        per_member[pos[r]][tgt] = iv
    if keep_by_target:
        refit_table = aggregate_edges(per_member, len(members), lags)
        # only edges that survived pruning are reported
        surviving = pruned.keys()
        refit_table = refit_table.with_records(r for r in refit_table if r.key in surviving)
    else:
        refit_table = pruned.with_records(())
    return RefitResult(reports, refit_table, tuple(null))


def _fit_restricted(member, lags, target, keep, config, member_id):
    design = build_design(member, lags, target).restrict(keep)
    forest = fit(design, config, member=member_id)
    report = FitReport.compute_or_none(design.y, forest.predict_batch(design.X), design.n_columns)
    return report, aggregate_importance(forest, design)


# ---------------------------------------------------------------------------
# graphs and export


@dataclass(frozen=True)
class PathwayGraph:
    nodes: tuple[str, ...]
    edges: tuple[EdgeRecord, ...]

    def __post_init__(self):
        names = set(self.nodes)
        for e in self.edges:
            if e.source not in names or e.target not in names:
                raise ValueError(f"edge {e.key} references an unknown node")
            if not e.mean_weight > 0:
                raise ValueError(f"edge {e.key} has non-positive weight")

    def edge_keys(self) -> set[tuple[str, str, int]]:
        return {e.key for e in self.edges}


def build_graph(pruned: EdgeTable, nodes: Sequence[str] | None = None, drop_self_loops: bool = False,
                per_target_display_cap: int | None = None) -> PathwayGraph:
    """Graph of the positive-weight edges of ``pruned``.

    With ``drop_self_loops`` and/or ``per_target_display_cap`` the display
    variant is produced: autocorrelated edges are removed first, then each
    target keeps its strongest ``per_target_display_cap`` incoming edges.
    """
    if nodes is None:
        nodes = []
        for r in pruned.records:
            for name in (r.source, r.target):
                if name not in nodes:
                    nodes.append(name)
    edges = [r for r in _sort_desc(pruned.records) if r.mean_weight > 0]
    if drop_self_loops:
        edges = [r for r in edges if r.source != r.target]
    if per_target_display_cap is not None:
        edges = _top_k(edges, per_target_display_cap)
    return PathwayGraph(tuple(nodes), tuple(edges))


def weight_color(weight: float, lo: float, hi: float) -> str:
    """Log-scale ramp from yellow (weakest) to blue (strongest) as ``#rrggbb``."""
    yellow = np.array([0xF2, 0xC9, 0x1C])
    blue = np.array([0x1F, 0x3C, 0xA8])
    if hi <= lo or weight <= 0:
        frac = 1.0
    else:
        frac = (math.log10(weight) - math.log10(lo)) / (math.log10(hi) - math.log10(lo))
        frac = min(1.0, max(0.0, frac))
    rgb = np.rint(yellow + frac * (blue - yellow)).astype(int)
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def _fmt(x: float) -> str:
    return repr(float(x))


def to_dot(graph: PathwayGraph) -> str:
    lines = ["digraph pathway {", "  rankdir=LR;", "  node [shape=circle];"]
    for n in graph.nodes:
        lines.append(f'  "{n}";')
    if graph.edges:
        weights = [e.mean_weight for e in graph.edges]
        lo, hi = min(weights), max(weights)
        for e in graph.edges:
            color = weight_color(e.mean_weight, lo, hi)
            lines.append(f'  "{e.source}" -> "{e.target}" [label="{e.lag}", color="{color}", '
                         f'penwidth=2]; // weight={_fmt(e.mean_weight)}')
    lines.append("}")
    return "\n".join(lines) + "\n"


def to_json(graph: PathwayGraph, meta: Mapping | None = None) -> str:
    doc = {
        "nodes": list(graph.nodes),
        "edges": [
            {"source": e.source, "target": e.target, "lag": e.lag, "weight": e.mean_weight,
             "sigma": e.weight_sigma, "ensembles": e.ensembles_with_edge}
            for e in graph.edges
        ],
        "meta": dict(meta or {}),
    }
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"


def write_edge_csv(table: EdgeTable, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EDGE_HEADER)
        for r in table.records:
            w.writerow((r.source, r.target, r.lag, f"{r.mean_weight:.17g}", f"{r.weight_sigma:.17g}",
                        r.ensembles_with_edge))


def read_edge_csv(path: str | Path, R: int, lags: LagSpec | None = None) -> EdgeTable:
    """Load an edge CSV; record order is preserved."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(path)
    records = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != EDGE_HEADER:
            raise ValueError(f"{path}: expected header {','.join(EDGE_HEADER)}")
        for row in reader:
            if not row:
                continue
            if len(row) != 6:
                raise ValueError(f"{path}:{reader.line_num}: expected 6 fields")
            try:
                records.append(EdgeRecord(row[0], row[1], int(row[2]), float(row[3]), float(row[4]), int(row[5])))
            except ValueError as e:
                raise ValueError(f"{path}:{reader.line_num}: {e}") from None
    return EdgeTable(tuple(records), R, lags)


def export(obj: PathwayGraph | EdgeTable, fmt: str, path: str | Path, meta: Mapping | None = None) -> Path:
    """Write ``obj`` as ``dot``, ``json`` or ``csv``."""
    path = Path(path)
    if fmt == "csv":
        table = obj if isinstance(obj, EdgeTable) else EdgeTable(obj.edges, max([e.ensembles_with_edge for e in obj.edges] + [1]))
        write_edge_csv(table, path)
        return path
    graph = obj if isinstance(obj, PathwayGraph) else build_graph(obj)
    if fmt == "dot":
        text = to_dot(graph)
    elif fmt == "json":
        text = to_json(graph, meta)
    else:
        raise ValueError(f"unknown export format {fmt!r}")
    path.write_text(text, encoding="utf-8")
    return path
