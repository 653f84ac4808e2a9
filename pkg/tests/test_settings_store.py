"""Tests for the run configuration layer."""
import json

import pytest

from engine.errors import ConfigError
from engine.settings_store import default_config, load_config, save_config


def _write(tmp_path, data):
    path = tmp_path / "netcox.json"
    path.write_text(json.dumps(data))
    return str(path)


def test_missing_file_gives_defaults(tmp_path):
    cfg = load_config(str(tmp_path / "absent.json"))
    assert cfg.kernel.name == "triangular"
    assert cfg.bandwidth == "auto"
    assert cfg.level == 0.99
    assert cfg.rounding == "nearest"
    assert cfg.features.lookback_weeks == 4
    assert [r.label for r in cfg.regimes] == ["1-3", "2-4", "3-5", "4-6", "5-12", "10-inf"]
    assert cfg.solver.warm_start is True


def test_file_overrides_defaults(tmp_path):
    cfg = load_config(_write(tmp_path, {"bandwidth": 6, "solver": {"max_iter": 7}, "seed": 11}))
    assert cfg.bandwidth == 6
    assert cfg.solver.max_iter == 7
    assert cfg.solver.grad_tol == 1e-8
    assert cfg.seed == 11


def test_overrides_apply_last(tmp_path):
    cfg = load_config(_write(tmp_path, {"seed": 11}), overrides={"seed": 12})
    assert cfg.seed == 12


def test_unknown_key_is_named(tmp_path):
    with pytest.raises(ConfigError, match=r"solver\.grad_toll"):
        load_config(_write(tmp_path, {"solver": {"grad_toll": 1e-6}}))


def test_wrong_type_is_rejected(tmp_path):
    with pytest.raises(ConfigError, match="level"):
        load_config(_write(tmp_path, {"level": "high"}))


def test_level_out_of_range(tmp_path):
    with pytest.raises(ConfigError, match="level"):
        load_config(_write(tmp_path, {"level": 1.0}))


def test_bad_regime_names_its_index(tmp_path):
    with pytest.raises(ConfigError, match=r"regimes\[0\]"):
        load_config(_write(tmp_path, {"regimes": ["5"]}))


def test_bad_candidates(tmp_path):
    with pytest.raises(ConfigError, match="bandwidth_candidates"):
        load_config(_write(tmp_path, {"bandwidth_candidates": [0, 1]}))


def test_invalid_json(tmp_path):
    path = tmp_path / "netcox.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(str(path))


def test_auto_bandwidth_must_be_resolved(tmp_path):
    cfg = load_config(str(tmp_path / "absent.json"))
    with pytest.raises(ConfigError, match="auto"):
        cfg.model_spec(q=2)
    spec = cfg.model_spec(q=2, bandwidth=5)
    assert spec.bandwidth == 5.0 and spec.q == 2


def test_censor_kappa_sets_selector_probability(tmp_path):
    cfg = load_config(_write(tmp_path, {"simulation": {"censor": "bernoulli", "censor_kappa": 6}}))
    design = cfg.sim_design()
    assert design.censor_p == pytest.approx(6 / 60)
    assert design.seed == cfg.seed


def test_save_then_load(tmp_path):
    data = default_config()
    data["seed"] = 99
    data["bandwidth"] = 4
    path = str(tmp_path / "sub" / "netcox.json")
    save_config(data, path)
    cfg = load_config(path)
    assert cfg.seed == 99 and cfg.bandwidth == 4
