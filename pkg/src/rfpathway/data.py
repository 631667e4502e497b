"""Time-series containers, CSV ingestion and preprocessing.

Every container is frozen after construction. Preprocessing steps return new
objects and never modify their inputs.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

LONG_HEADER = ("ensemble", "feature", "t", "value")
GRID_HEADER = ("ensemble", "variable", "lat", "lon", "t", "value")


class DataError(ValueError):
    """Raised for invalid input data or incompatible collections."""


@dataclass(frozen=True)
class FeatureSeries:
    name: str
    values: np.ndarray

    def __post_init__(self):
        if not self.name:
            raise DataError("feature name must be nonempty")
        values = np.array(self.values, dtype=float)
        if values.ndim != 1 or values.size < 2:
            raise DataError(f"feature {self.name!r} needs at least 2 values")
        if not np.all(np.isfinite(values)):
            raise DataError(f"feature {self.name!r} contains non-finite values")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class FeatureCollection:
    """Ordered set of equal-length named series (one ensemble member)."""

    features: tuple[FeatureSeries, ...]

    def __post_init__(self):
        feats = tuple(self.features)
        if not feats:
            raise DataError("a collection needs at least one feature")
        names = [f.name for f in feats]
        if len(set(names)) != len(names):
            raise DataError(f"duplicate feature names in {names}")
        lengths = {len(f) for f in feats}
        if len(lengths) != 1:
            raise DataError(f"ragged lengths: {sorted(lengths)}")
        object.__setattr__(self, "features", feats)

    @classmethod
    def from_arrays(cls, arrays: dict[str, Sequence[float]]) -> "FeatureCollection":
        return cls(tuple(FeatureSeries(k, np.asarray(v, dtype=float)) for k, v in arrays.items()))

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.features]

    @property
    def n(self) -> int:
        return len(self.features)

    @property
    def K(self) -> int:
        return len(self.features[0])

    def __getitem__(self, name: str) -> np.ndarray:
        for f in self.features:
            if f.name == name:
                return f.values
        raise KeyError(name)

    def as_matrix(self) -> np.ndarray:
        """K x n array, one column per feature."""
        return np.column_stack([f.values for f in self.features])

    def subset(self, names: Iterable[str]) -> "FeatureCollection":
        return FeatureCollection(tuple(FeatureSeries(n, self[n]) for n in names))


@dataclass(frozen=True)
class EnsembleSet:
    members: tuple[FeatureCollection, ...]

    def __post_init__(self):
        members = tuple(self.members)
        if not members:
            raise DataError("an ensemble needs at least one member")
        ref = members[0]
        for r, m in enumerate(members[1:], start=2):
            if m.names != ref.names:
                raise DataError(f"member {r} feature names {m.names} differ from {ref.names}")
            if m.K != ref.K:
                raise DataError(f"ragged lengths: member {r} has K={m.K}, member 1 has K={ref.K}")
        object.__setattr__(self, "members", members)

    @property
    def R(self) -> int:
        return len(self.members)

    @property
    def names(self) -> list[str]:
        return self.members[0].names

    @property
    def K(self) -> int:
        return self.members[0].K

    def map(self, fn) -> "EnsembleSet":
        return EnsembleSet(tuple(fn(m) for m in self.members))


@dataclass(frozen=True)
class GridCell:
    lat: float
    lon: float
    variable: str
    values: np.ndarray


@dataclass(frozen=True)
class GridCollection:
    cells: tuple[GridCell, ...]

    def __post_init__(self):
        cells = tuple(self.cells)
        if not cells:
            raise DataError("grid has no cells")
        seen = set()
        lengths = set()
        fixed = []
        for c in cells:
            if not -90.0 <= c.lat <= 90.0:
                raise DataError(f"latitude {c.lat} outside [-90, 90]")
            if not -180.0 <= c.lon < 180.0:
                raise DataError(f"longitude {c.lon} outside [-180, 180)")
            key = (c.lat, c.lon, c.variable)
            if key in seen:
                raise DataError(f"duplicate grid cell {key}")
            seen.add(key)
            values = np.array(c.values, dtype=float)
            if not np.all(np.isfinite(values)):
                raise DataError(f"non-finite value in grid cell {key}")
            values.setflags(write=False)
            lengths.add(values.size)
            fixed.append(GridCell(float(c.lat), float(c.lon), c.variable, values))
        if len(lengths) != 1:
            raise DataError(f"ragged lengths: {sorted(lengths)}")
        object.__setattr__(self, "cells", tuple(fixed))

    @property
    def variables(self) -> list[str]:
        out: list[str] = []
        for c in self.cells:
            if c.variable not in out:
                out.append(c.variable)
        return out


@dataclass(frozen=True)
class Band:
    name: str
    lat_min: float
    lat_max: float


@dataclass(frozen=True)
class BandSpec:
    """Contiguous latitude bands; ``[min, max)`` except the top band, which closes at its max
    when that max is +90."""

    bands: tuple[Band, ...]

    def __post_init__(self):
        bands = tuple(sorted(self.bands, key=lambda b: b.lat_min))
        if not bands:
            raise DataError("BandSpec needs at least one band")
        for b in bands:
            if not b.lat_min < b.lat_max:
                raise DataError(f"band {b.name!r} has empty extent")
        for lo, hi in zip(bands, bands[1:]):
            if hi.lat_min < lo.lat_max:
                raise DataError(f"bands {lo.name!r} and {hi.name!r} overlap")
            if hi.lat_min > lo.lat_max:
                raise DataError(f"gap between bands {lo.name!r} and {hi.name!r}")
        object.__setattr__(self, "bands", bands)

    def locate(self, lat: float) -> Band | None:
        top = self.bands[-1]
        for b in self.bands:
            if b.lat_min <= lat < b.lat_max:
                return b
        if lat == top.lat_max == 90.0:
            return top
        return None


# Zonal bands used for the Pinatubo analysis, north to south.
PINATUBO_BANDS = BandSpec((
    Band("PolarN", 66.5, 90.0),
    Band("TempN", 35.0, 66.5),
    Band("SubtropN", 23.5, 35.0),
    Band("Tropical", -23.5, 23.5),
    Band("SubtropS", -35.0, -23.5),
    Band("TempS", -66.5, -35.0),
    Band("PolarS", -90.0, -66.5),
))

GLOBE = BandSpec((Band("Globe", -90.0, 90.0),))


# ---------------------------------------------------------------------------
# ingestion


def _read_rows(path: Path, header: tuple[str, ...]):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            got = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if tuple(h.strip() for h in got) != header:
            raise DataError(f"{path}:1: expected header {','.join(header)}, got {','.join(got)}")
        for row in reader:
            if not row:
                continue
            yield reader.line_num, row


def _parse_float(text: str, path, line: int, what: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise DataError(f"{path}:{line}: malformed {what} {text!r}") from None
    if not math.isfinite(v):
        raise DataError(f"{path}:{line}: non-finite {what} {text!r}")
    return v


def _parse_int(text: str, path, line: int, what: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise DataError(f"{path}:{line}: malformed {what} {text!r}") from None


def _assemble(series: dict, path) -> dict:
    """Turn ``{key: {t: value}}`` into ``{key: array}``, checking t runs 1..K."""
    out = {}
    for key, points in series.items():
        ts = sorted(points)
        if ts != list(range(1, len(ts) + 1)):
            raise DataError(f"{path}: series {key} has non-contiguous time index (must be 1..K)")
        out[key] = np.array([points[t] for t in ts], dtype=float)
    lengths = {v.size for v in out.values()}
    if len(lengths) > 1:
        raise DataError(f"{path}: ragged lengths {sorted(lengths)}")
    return out


def load_ensemble_csv(path: str | Path) -> EnsembleSet:
    """Read a long-format ``ensemble,feature,t,value`` CSV.

    Members are ordered by ensemble id and features by first appearance.
    """
    series: dict[tuple[int, str], dict[int, float]] = {}
    feat_order: list[str] = []
    for line, row in _read_rows(path, LONG_HEADER):
        if len(row) != 4:
            raise DataError(f"{path}:{line}: expected 4 fields, got {len(row)}")
        ens = _parse_int(row[0], path, line, "ensemble")
        feat = row[1].strip()
        if not feat:
            raise DataError(f"{path}:{line}: empty feature name")
        t = _parse_int(row[2], path, line, "t")
        v = _parse_float(row[3], path, line, "value")
        points = series.setdefault((ens, feat), {})
        if t in points:
            raise DataError(f"{path}:{line}: duplicate row for ensemble={ens} feature={feat} t={t}")
        points[t] = v
        if feat not in feat_order:
            feat_order.append(feat)
    if not series:
        raise DataError(f"{path}: no data rows")
    arrays = _assemble(series, path)
    members = []
    for ens in sorted({e for e, _ in arrays}):
        missing = [f for f in feat_order if (ens, f) not in arrays]
        if missing:
            raise DataError(f"{path}: ensemble {ens} lacks features {missing}")
        members.append(FeatureCollection(tuple(FeatureSeries(f, arrays[(ens, f)]) for f in feat_order)))
    return EnsembleSet(tuple(members))


def load_grid_csv(path: str | Path) -> dict[int, GridCollection]:
    """Read a grid CSV ``ensemble,variable,lat,lon,t,value``; one GridCollection per ensemble id."""
    series: dict[tuple[int, str, float, float], dict[int, float]] = {}
    for line, row in _read_rows(path, GRID_HEADER):
        if len(row) != 6:
            raise DataError(f"{path}:{line}: expected 6 fields, got {len(row)}")
        ens = _parse_int(row[0], path, line, "ensemble")
        var = row[1].strip()
        if not var:
            raise DataError(f"{path}:{line}: empty variable name")
        lat = _parse_float(row[2], path, line, "lat")
        lon = _parse_float(row[3], path, line, "lon")
        t = _parse_int(row[4], path, line, "t")
        v = _parse_float(row[5], path, line, "value")
        points = series.setdefault((ens, var, lat, lon), {})
        if t in points:
            raise DataError(f"{path}:{line}: duplicate row for {(ens, var, lat, lon, t)}")
        points[t] = v
    if not series:
        raise DataError(f"{path}: no data rows")
    arrays = _assemble(series, path)
    grids = {}
    for ens in sorted({k[0] for k in arrays}):
        cells = tuple(GridCell(lat, lon, var, arr) for (e, var, lat, lon), arr in arrays.items() if e == ens)
        grids[ens] = GridCollection(cells)
    return grids


def load_collection(path: str | Path, schema: str = "long"):
    """Load ``path`` under ``schema`` ("long" -> EnsembleSet, "grid" -> {ensemble: GridCollection})."""
    if schema == "long":
        return load_ensemble_csv(path)
    if schema == "grid":
        return load_grid_csv(path)
    raise DataError(f"unknown schema {schema!r}")


def write_ensemble_csv(ens: EnsembleSet, path: str | Path) -> None:
    """Write the long format; values use ``repr`` so reloading is exact."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LONG_HEADER)
        for r, member in enumerate(ens.members, start=1):
            for f in member.features:
                for t, v in enumerate(f.values, start=1):
                    w.writerow((r, f.name, t, repr(float(v))))


# ---------------------------------------------------------------------------
# preprocessing


def zonal_average(grid: GridCollection, bands: BandSpec, area_weighted: bool = False) -> FeatureCollection:
    """Mean of each variable over the cells of each band, named ``<Band>_<Variable>``.

    Cells falling outside every band are ignored. With ``area_weighted`` each
    cell counts with weight cos(latitude).
    """
    variables = grid.variables
    members: dict[tuple[str, str], list[GridCell]] = {}
    for c in grid.cells:
        band = bands.locate(c.lat)
        if band is not None:
            members.setdefault((band.name, c.variable), []).append(c)
    features = []
    for band in sorted(bands.bands, key=lambda b: -b.lat_max):
        for var in variables:
            cells = members.get((band.name, var))
            if not cells:
                raise DataError(f"band {band.name!r} has no cells for variable {var!r}")
            stack = np.vstack([c.values for c in cells])
            if area_weighted:
                w = np.cos(np.deg2rad([c.lat for c in cells]))
                mean = (w @ stack) / w.sum()
            else:
                mean = stack.mean(axis=0)
            features.append(FeatureSeries(f"{band.name}_{var}", mean))
    return FeatureCollection(tuple(features))


def global_average(grid: GridCollection, area_weighted: bool = False) -> FeatureCollection:
    return zonal_average(grid, GLOBE, area_weighted)


def counterfactual_difference(forced: EnsembleSet, counterfactual: EnsembleSet) -> EnsembleSet:
    """Subtract each paired counterfactual member from its forced member."""
    if forced.R != counterfactual.R:
        raise DataError(f"cannot pair {forced.R} forced members with {counterfactual.R} counterfactual members")
    if forced.names != counterfactual.names:
        raise DataError(f"feature names differ: {forced.names} vs {counterfactual.names}")
    if forced.K != counterfactual.K:
        raise DataError(f"series lengths differ: {forced.K} vs {counterfactual.K}")
    members = []
    for a, b in zip(forced.members, counterfactual.members):
        members.append(FeatureCollection(tuple(
            FeatureSeries(fa.name, fa.values - fb.values) for fa, fb in zip(a.features, b.features)
        )))
    return EnsembleSet(tuple(members))


def normalize_minmax(collection: FeatureCollection) -> FeatureCollection:
    """Rescale each feature onto [-1, 1]; constant features become all zeros."""
    out = []
    for f in collection.features:
        lo, hi = f.values.min(), f.values.max()
        if hi == lo:
            scaled = np.zeros_like(f.values)
        else:
            scaled = np.clip(2.0 * (f.values - lo) / (hi - lo) - 1.0, -1.0, 1.0)
        out.append(FeatureSeries(f.name, scaled))
    return FeatureCollection(tuple(out))


def window(collection: FeatureCollection, start: int, length: int) -> FeatureCollection:
    """Keep time steps ``start .. start+length-1`` (1-based, inclusive)."""
    K = collection.K
    if start < 1 or length < 2 or start + length - 1 > K:
        raise DataError(f"window start={start} length={length} out of range for K={K}")
    sl = slice(start - 1, start - 1 + length)
    return FeatureCollection(tuple(FeatureSeries(f.name, f.values[sl]) for f in collection.features))
