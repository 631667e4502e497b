import json

import pytest

from rfpathway.config import PRESETS, ConfigError, build_config, load_config
from rfpathway.lags import PINATUBO_LAGS, SYNTHETIC_LAGS


def test_pinatubo_defaults():
    c = build_config()
    assert c.lags == PINATUBO_LAGS.lags
    assert c.preprocess.window == (1, 750)
    assert (c.prune.delta, c.prune.top_k) == (1e-4, 4)
    assert (c.forest.n_trees, c.forest.max_depth) == (100, 4)
    assert (c.gate.r2_min, c.gate.rmse_max, c.gate.strict) == (0.75, 0.15, False)
    assert c.targets is None


def test_synthetic_preset():
    c = build_config(preset="synthetic")
    assert c.lags == SYNTHETIC_LAGS.lags
    assert c.data.source == "synthetic"
    assert not c.preprocess.difference and c.preprocess.window is None
    assert (c.synth.n_ensembles, c.synth.length) == (5, 750)


def test_overrides_and_seed_injection():
    c = build_config({"prune": {"delta": 0.01}}, seed=7, **{"gate.strict": True, "forest.n_trees": 3})
    assert c.prune.delta == 0.01 and c.gate.strict and c.forest.n_trees == 3
    assert c.forest_config().seed == 7 and c.synth_config().seed == 7


@pytest.mark.parametrize("raw", [
    {"bogus": 1},
    {"forest": {"trees": 5}},
    {"forest": {"seed": 3}},
    {"prune": {"rule_order": "random"}},
    {"lags": [3, 1]},
    {"lags": []},
    {"targets": []},
    {"preprocess": {"window": [1]}},
    {"data": {"schema": "wide"}},
    {"seed": -1},
    {"forest": {"max_depth": 0}},
])
def test_invalid_configs(raw):
    with pytest.raises(ConfigError):
        build_config(raw)


def test_unknown_preset_and_section():
    with pytest.raises(ConfigError):
        build_config(preset="nope")
    with pytest.raises(ConfigError):
        build_config(**{"nope.x": 1})


def test_digest_ignores_workers_and_out_dir():
    a = build_config(workers=1, out_dir="a")
    b = build_config(workers=8, out_dir="b")
    assert a.digest() == b.digest()
    assert a.digest() != build_config(seed=1).digest()


def test_load_config_file(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"preset": "synthetic", "targets": ["W", "X"]}))
    c = load_config(p, seed=3)
    assert c.targets == ("W", "X") and c.seed == 3
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(p)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")


def test_to_dict_is_json_and_round_trips():
    c = build_config(preset="synthetic", seed=4)
    d = json.loads(json.dumps(c.to_dict()))
    d.pop("seed")
    assert build_config(d, seed=4) == c


def test_presets_are_known():
    assert set(PRESETS) == {"pinatubo", "synthetic"}
