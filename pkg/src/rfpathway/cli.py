"""``rfpathway`` command line: synth, fit, prune, pipeline, export."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, RunConfig, load_config
from .data import DataError, write_ensemble_csv
from .pathway import EdgeTable, export, read_edge_csv, write_edge_csv

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INGEST = 3
EXIT_GATE = 4
EXIT_IO = 5

log = logging.getLogger("rfpathway")


def _parse_set(items: list[str]) -> dict:
    out = {}
    for item in items or ():
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw
    return out


def _config(args) -> RunConfig:
    overrides = _parse_set(args.set)
    overrides.update({
        "preset": args.preset,
        "seed": args.seed,
        "out_dir": args.out_dir,
        "workers": args.workers,
    })
    if args.strict_gate:
        overrides["gate.strict"] = True
    if getattr(args, "forced", None):
        overrides["data.forced"] = args.forced
    if getattr(args, "counterfactual", None):
        overrides["data.counterfactual"] = args.counterfactual
    return load_config(args.config, **overrides)


def _manifest_R(edges: Path) -> int | None:
    m = edges.parent / "manifest.json"
    if m.is_file():
        try:
            return int(json.loads(m.read_text(encoding="utf-8"))["R"])
        except (KeyError, ValueError, TypeError):
            return None
    return None


def _read_edges(path: Path, R: int | None, cfg: RunConfig) -> EdgeTable:
    R = R or _manifest_R(path)
    if R is None:
        raise ConfigError(f"cannot infer ensemble count for {path}; pass --ensembles")
    try:
        return read_edge_csv(path, R, cfg.lag_spec)
    except FileNotFoundError:
        raise
    except ValueError as e:
        raise DataError(str(e)) from None


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(cfg: RunConfig, args) -> list[Path]:
    from .pipeline import StageTimer, write_manifest
    from .synth import generate

    timer = StageTimer()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with timer.stage("synth"):
        ens = generate(cfg.synth_config())
    path = out / "synthetic.csv"
    write_ensemble_csv(ens, path)
    manifest = write_manifest(out, cfg, "synth", timer, {"R": ens.R, "features": ens.names, "K": ens.K})
    return [path, manifest]


def cmd_fit(cfg: RunConfig, args) -> list[Path]:
    from .pipeline import run_fit

    _, _, files = run_fit(cfg)
    return list(files.values())


def cmd_prune(cfg: RunConfig, args) -> list[Path]:
    from .pipeline import (StageTimer, _reports_json, prepare, prune_and_refit, write_graph_files,
                           write_manifest)

    timer = StageTimer()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    edges = Path(args.edges) if args.edges else out / "edges_unpruned.csv"
    table = _read_edges(edges, args.ensembles, cfg)
    has_data = cfg.data.source == "synthetic" or bool(cfg.data.forced)
    refit = has_data and not args.no_refit
    ens = None
    if refit:
        with timer.stage("ingest_preprocess"):
            ens = prepare(cfg)
    with timer.stage("prune_refit"):
        pruned, result, failures = prune_and_refit(ens, table, cfg, refit=refit)
    files = []
    if result is not None:
        write_edge_csv(pruned, out / "edges_pruned_prerefit.csv")
        files.append(out / "edges_pruned_prerefit.csv")
    final = result.table if result is not None else pruned
    write_edge_csv(final, out / "edges_pruned.csv")
    files.append(out / "edges_pruned.csv")
    nodes = ens.names if ens is not None else None
    files.extend(write_graph_files(final, nodes, cfg, out).values())
    files.append(write_manifest(out, cfg, "prune", timer, {
        "R": table.R,
        "input_edges": str(edges),
        "refit": refit,
        "refit_reports": _reports_json(result.reports) if result else {},
        "null_pathway_targets": list(result.null_targets) if result else [],
        "gate_failures": failures,
        "edge_counts": {"unpruned": len(table), "pruned": len(final)},
    }))
    return files


def cmd_pipeline(cfg: RunConfig, args) -> list[Path]:
    from .pipeline import run_pipeline

    return list(run_pipeline(cfg).files.values())


def cmd_export(cfg: RunConfig, args) -> list[Path]:
    from .pipeline import graph_meta

    out = Path(cfg.out_dir)
    edges = Path(args.edges) if args.edges else out / "edges_pruned.csv"
    table = _read_edges(edges, args.ensembles, cfg)
    target = Path(args.output) if args.output else out / f"graph.{args.format}"
    target.parent.mkdir(parents=True, exist_ok=True)
    meta = graph_meta(cfg, table.R) if args.format == "json" else None
    return [export(table, args.format, target, meta)]


COMMANDS = {
    "synth": cmd_synth,
    "fit": cmd_fit,
    "prune": cmd_prune,
    "pipeline": cmd_pipeline,
    "export": cmd_export,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--preset", help="named defaults: pinatubo or synthetic")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--out-dir", help="output directory")
    common.add_argument("--workers", type=int, help="worker processes (never changes outputs)")
    common.add_argument("--strict-gate", action="store_true", help="abort when a fit misses the gate")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override any config key, e.g. prune.delta=0.001 (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--forced", help="forced-run ensemble CSV")
    data.add_argument("--counterfactual", help="counterfactual ensemble CSV")

    edges = argparse.ArgumentParser(add_help=False)
    edges.add_argument("--edges", help="edge CSV to read")
    edges.add_argument("--ensembles", type=int, help="ensemble count R for the edge CSV")

    p = argparse.ArgumentParser(prog="rfpathway", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="write the synthetic ensemble CSV")
    sub.add_parser("fit", parents=[common, data], help="fit forests and write the unpruned edge table")
    pr = sub.add_parser("prune", parents=[common, data, edges], help="prune an edge table and refit")
    pr.add_argument("--no-refit", action="store_true", help="skip refitting on the surviving edges")
    sub.add_parser("pipeline", parents=[common, data], help="ingest through graph in one run")
    ex = sub.add_parser("export", parents=[common, edges], help="convert an edge table to dot/json/csv")
    ex.add_argument("--format", choices=("dot", "json", "csv"), default="dot")
    ex.add_argument("--output", help="output file (default <out-dir>/graph.<format>)")
    return p


def main(argv: list[str] | None = None) -> int:
    from .pipeline import GateFailure

    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        files = COMMANDS[args.command](cfg, args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, ValueError) as e:
        # remaining ValueErrors come from data that cannot be designed or fitted
        print(f"input error: {e}", file=sys.stderr)
        return EXIT_INGEST
    except GateFailure as e:
        print(f"gate failure: {e}", file=sys.stderr)
        return EXIT_GATE
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return EXIT_IO
    for f in files:
        print(f)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
