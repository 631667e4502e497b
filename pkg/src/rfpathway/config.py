"""Run configuration: presets, JSON loading and validation."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from .forest import ForestConfig
from .lags import PINATUBO_LAGS, SYNTHETIC_LAGS, LagSpec
from .pathway import DEFAULT_DELTA, DEFAULT_TOP_K, RuleOrder
from .synth import SynthConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DataSection:
    source: str = "file"  # "file" or "synthetic"
    forced: str | None = None
    counterfactual: str | None = None
    schema: str = "long"  # "long" or "grid"


@dataclass(frozen=True)
class PreprocessSection:
    difference: bool = True
    window: tuple[int, int] | None = (1, 750)
    normalize: bool = True
    spatial: str = "global"  # "none", "global" or "zonal"; grid input only
    area_weighted: bool = False


@dataclass(frozen=True)
class PruneSection:
    delta: float = DEFAULT_DELTA
    top_k: int = DEFAULT_TOP_K
    rule_order: str = RuleOrder.COLLAPSE_FILTER_TOPK.value


@dataclass(frozen=True)
class GateSection:
    r2_min: float = 0.75
    rmse_max: float = 0.15
    strict: bool = False


@dataclass(frozen=True)
class DisplaySection:
    drop_self_loops: bool = False
    per_target_cap: int | None = None


@dataclass(frozen=True)
class RunConfig:
    preset: str = "pinatubo"
    data: DataSection = field(default_factory=DataSection)
    synth: SynthConfig = field(default_factory=SynthConfig)
    preprocess: PreprocessSection = field(default_factory=PreprocessSection)
    lags: tuple[int, ...] = PINATUBO_LAGS.lags
    targets: tuple[str, ...] | None = None
    forest: ForestConfig = field(default_factory=ForestConfig)
    prune: PruneSection = field(default_factory=PruneSection)
    gate: GateSection = field(default_factory=GateSection)
    display: DisplaySection = field(default_factory=DisplaySection)
    seed: int = 0
    out_dir: str = "out"
    workers: int = 1

    @property
    def lag_spec(self) -> LagSpec:
        return LagSpec(self.lags)

    def forest_config(self) -> ForestConfig:
        return replace(self.forest, seed=self.seed)

    def synth_config(self) -> SynthConfig:
        return replace(self.synth, seed=self.seed)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["preprocess"]["window"] = list(self.preprocess.window) if self.preprocess.window else None
        d["lags"] = list(self.lags)
        d["targets"] = list(self.targets) if self.targets is not None else None
        # seeds live at top level only
        d["forest"].pop("seed")
        d["synth"].pop("seed")
        return d

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form, ignoring ``workers`` and ``out_dir``."""
        d = self.to_dict()
        d.pop("workers")
        d.pop("out_dir")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()


PRESETS: dict[str, dict[str, Any]] = {
    "pinatubo": {},
    "synthetic": {
        "data": {"source": "synthetic"},
        "preprocess": {"difference": False, "window": None, "normalize": True, "spatial": "none"},
        "lags": list(SYNTHETIC_LAGS.lags),
    },
}

_SECTIONS = {
    "data": DataSection,
    "synth": SynthConfig,
    "preprocess": PreprocessSection,
    "forest": ForestConfig,
    "prune": PruneSection,
    "gate": GateSection,
    "display": DisplaySection,
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _section(cls, raw: Any, name: str):
    if not isinstance(raw, dict):
        raise ConfigError(f"section {name!r} must be an object")
    allowed = {f.name for f in fields(cls)} - ({"seed"} if name in ("forest", "synth") else set())
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {name!r}: {sorted(unknown)}")
    raw = dict(raw)
    if name == "preprocess" and raw.get("window") is not None:
        w = raw["window"]
        if not (isinstance(w, (list, tuple)) and len(w) == 2 and all(isinstance(v, int) for v in w)):
            raise ConfigError("preprocess.window must be [start, length] or null")
        raw["window"] = tuple(w)
    try:
        return cls(**raw)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid {name!r} section: {e}") from None


def build_config(raw: dict | None = None, **overrides) -> RunConfig:
    """Resolve preset + ``raw`` document + CLI ``overrides`` into a validated RunConfig."""
    raw = dict(raw or {})
    preset = overrides.get("preset") or raw.get("preset") or "pinatubo"
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    doc = _merge(PRESETS[preset], raw)
    for k, v in overrides.items():
        if v is None:
            continue
        if "." in k:
            sec, key = k.split(".", 1)
            if sec not in _SECTIONS:
                raise ConfigError(f"unknown config section {sec!r}")
            doc.setdefault(sec, {})[key] = v
        else:
            doc[k] = v
    doc["preset"] = preset
    unknown = set(doc) - {f.name for f in fields(RunConfig)}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    kwargs: dict[str, Any] = {"preset": preset}
    for name, cls in _SECTIONS.items():
        if name in doc:
            kwargs[name] = _section(cls, doc[name], name)
    if "lags" in doc:
        try:
            kwargs["lags"] = LagSpec.of(doc["lags"]).lags
        except (TypeError, ValueError) as e:
            raise ConfigError(f"invalid lags: {e}") from None
    if doc.get("targets") is not None:
        if not isinstance(doc["targets"], (list, tuple)) or not doc["targets"]:
            raise ConfigError("targets must be a nonempty list or null")
        kwargs["targets"] = tuple(str(t) for t in doc["targets"])
    for key in ("seed", "workers"):
        if key in doc:
            if not isinstance(doc[key], int) or doc[key] < 0:
                raise ConfigError(f"{key} must be a nonnegative integer")
            kwargs[key] = doc[key]
    if "out_dir" in doc:
        kwargs["out_dir"] = str(doc["out_dir"])
    cfg = RunConfig(**kwargs)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    if cfg.data.source not in ("file", "synthetic"):
        raise ConfigError(f"data.source must be 'file' or 'synthetic', got {cfg.data.source!r}")
    if cfg.data.schema not in ("long", "grid"):
        raise ConfigError(f"data.schema must be 'long' or 'grid', got {cfg.data.schema!r}")
    if cfg.preprocess.spatial not in ("none", "global", "zonal"):
        raise ConfigError(f"preprocess.spatial must be none/global/zonal, got {cfg.preprocess.spatial!r}")
    try:
        RuleOrder(cfg.prune.rule_order)
    except ValueError:
        raise ConfigError(f"unknown prune.rule_order {cfg.prune.rule_order!r}") from None
    if cfg.prune.top_k < 1 or cfg.prune.delta < 0:
        raise ConfigError("prune.top_k must be >= 1 and prune.delta >= 0")
    if cfg.seed >= 2**64:
        raise ConfigError("seed must fit in 64 bits")


def load_config(path: str | Path | None = None, **overrides) -> RunConfig:
    raw = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON: {e}") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be an object")
    return build_config(raw, **overrides)
