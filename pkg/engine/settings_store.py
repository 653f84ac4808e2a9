"""Run configuration: JSON file merged over defaults, validated into a RunConfig."""
import copy
import json
import math
import os
from dataclasses import dataclass, field

from config import (
    CONFIG_PATH, CV_PATH, DEFAULT_N_SIMS, DEFAULT_QUANTILES, DEFAULT_REGIMES, DEFAULT_THETA_BOX,
    EVENTS_PATH, FEATURE_COLUMNS, FITS_PATH, GOF_PATH, PANEL_PATH, REJECTS_PATH, STATIONS_PATH,
    STUDY_PATH, TRIP_COLUMNS, TRIPS_PATH,
)
from engine.bandwidth import ROUNDING_MODES
from engine.errors import ConfigError
from engine.estimator import SolverConfig
from engine.features import FeatureSpec
from engine.kernels import Kernel, kernel_from_name
from engine.model import ModelSpec, ParameterCurve
from engine.netstats import FrequencyRegime
from engine.simulation import SimDesign, configuration_model_p


def _regime_str(lo, hi) -> str:
    return f"{lo}-{'inf' if math.isinf(hi) else hi}"


_DEFAULTS = {
    "kernel": "triangular",
    "bandwidth": "auto",
    "bandwidth_candidates": list(range(1, 53)),
    "rounding": "nearest",
    "level": 0.99,
    "features": {
        "r": 0.8,
        "lookback_weeks": 4,
        "anchor_weekday": "friday",
        "weekday_window": [4, 5, 6, 7],
        "columns": list(FEATURE_COLUMNS),
    },
    "eval_cells": "all",
    "regimes": [_regime_str(lo, hi) for lo, hi in DEFAULT_REGIMES],
    "n_sims": DEFAULT_N_SIMS,
    "quantiles": list(DEFAULT_QUANTILES),
    "seed": 0,
    "theta_box": list(DEFAULT_THETA_BOX),
    "solver": {
        "grad_tol": 1e-8,
        "max_iter": 100,
        "step_halving_max": 40,
        "ridge_floor": 1e-10,
        "warm_start": True,
    },
    "simulation": {
        "n_nodes": 60,
        "n_cells": 21,
        "cell_length": 24.0,
        "theta": [0.0, 0.4],
        "covariates": ["intercept", "bernoulli:0.5"],
        "censor": "all",
        "censor_p": 1.0,
        "censor_kappa": None,
        "method": "auto",
        "n_reps": 400,
        "t0": None,
    },
    "trip_columns": dict(TRIP_COLUMNS),
    "paths": {
        "trips": TRIPS_PATH,
        "events": EVENTS_PATH,
        "stations": STATIONS_PATH,
        "rejects": REJECTS_PATH,
        "panel": PANEL_PATH,
        "fits": FITS_PATH,
        "cv": CV_PATH,
        "gof": GOF_PATH,
        "study": STUDY_PATH,
    },
}

# Leaves whose default is None or whose value may take more than one JSON type
_FREE_LEAVES = {"bandwidth", "eval_cells", "simulation.censor_kappa", "simulation.t0"}


def default_config() -> dict:
    return copy.deepcopy(_DEFAULTS)


def _check_type(key: str, value, default) -> None:
    if key in _FREE_LEAVES:
        return
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, list):
        ok = isinstance(value, list)
    else:
        ok = isinstance(value, type(default))
    if not ok:
        raise ConfigError(f"{key}: expected {type(default).__name__}, got {type(value).__name__}")


def _merge(base: dict, update: dict, prefix: str = "") -> dict:
    for key, value in update.items():
        path = f"{prefix}{key}"
        if key not in base:
            raise ConfigError(f"{path}: unknown key")
        # trip_columns is a mapping of fixed keys; paths too
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{path}: expected an object")
            _merge(base[key], value, prefix=f"{path}.")
        else:
            _check_type(path, value, base[key])
            base[key] = value
    return base


@dataclass(frozen=True)
class RunConfig:
    kernel: Kernel
    bandwidth: object
    bandwidth_candidates: tuple
    rounding: str
    level: float
    features: FeatureSpec
    eval_cells: object
    regimes: tuple
    n_sims: int
    quantiles: tuple
    seed: int
    theta_box: tuple
    solver: SolverConfig
    simulation: dict = field(default_factory=dict)
    trip_columns: dict = field(default_factory=dict)
    paths: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    def model_spec(self, q: int, bandwidth: float | None = None, eval_times=()) -> ModelSpec:
        h = self.bandwidth if bandwidth is None else bandwidth
        if h == "auto":
            raise ConfigError("bandwidth: 'auto' must be resolved by bandwidth selection first")
        return ModelSpec(self.kernel, float(h), q, self.theta_box, tuple(eval_times))

    def sim_design(self, seed: int | None = None) -> SimDesign:
        s = self.simulation
        p = s["censor_p"]
        if s["censor_kappa"] is not None:
            p = configuration_model_p(s["censor_kappa"], s["n_nodes"])
        return SimDesign(
            n_nodes=s["n_nodes"], n_cells=s["n_cells"], cell_length=float(s["cell_length"]),
            true_curve=ParameterCurve.constant(s["theta"]), covariates=tuple(s["covariates"]),
            censor=s["censor"], censor_p=float(p), seed=self.seed if seed is None else seed,
        )


def validate(data: dict) -> RunConfig:
    """Turn a merged config dict into a RunConfig; ConfigError names the failing key."""
    def _wrap(key, fn):
        try:
            return fn()
        except (ValueError, TypeError, KeyError) as e:
            raise ConfigError(f"{key}: {e}") from e

    kernel = _wrap("kernel", lambda: kernel_from_name(data["kernel"]))
    bw = data["bandwidth"]
    if not (bw == "auto" or (isinstance(bw, (int, float)) and not isinstance(bw, bool) and bw > 0)):
        raise ConfigError("bandwidth: expected a positive number or 'auto'")
    cands = data["bandwidth_candidates"]
    if not cands or any(not isinstance(h, int) or isinstance(h, bool) or h < 1 for h in cands):
        raise ConfigError("bandwidth_candidates: expected a nonempty list of integers >= 1")
    if data["rounding"] not in ROUNDING_MODES:
        raise ConfigError(f"rounding: expected one of {ROUNDING_MODES}")
    if not 0.0 <= data["level"] < 1.0:
        raise ConfigError("level: expected a value in [0, 1)")

    f = data["features"]
    features = _wrap("features", lambda: FeatureSpec(
        r=f["r"], weekday_window=tuple(f["weekday_window"]), lookback_weeks=f["lookback_weeks"],
        anchor_weekday=f["anchor_weekday"], columns=tuple(f["columns"])))

    cells = data["eval_cells"]
    if not (cells == "all" or (isinstance(cells, list) and all(isinstance(c, int) for c in cells))):
        raise ConfigError("eval_cells: expected 'all' or a list of integers")

    regimes = tuple(_wrap(f"regimes[{k}]", lambda r=r: FrequencyRegime.parse(r))
                    for k, r in enumerate(data["regimes"]))
    if data["n_sims"] < 2:
        raise ConfigError("n_sims: expected an integer >= 2")
    if not data["quantiles"] or any(not 0.0 < q < 1.0 for q in data["quantiles"]):
        raise ConfigError("quantiles: expected values in (0, 1)")
    if data["seed"] < 0:
        raise ConfigError("seed: expected a nonnegative integer")
    box = data["theta_box"]
    if len(box) != 2 or not box[0] < box[1]:
        raise ConfigError("theta_box: expected [lo, hi] with lo < hi")
    solver = _wrap("solver", lambda: SolverConfig(**data["solver"]))

    s = data["simulation"]
    _wrap("simulation", lambda: SimDesign(
        n_nodes=s["n_nodes"], n_cells=s["n_cells"], cell_length=float(s["cell_length"]),
        true_curve=ParameterCurve.constant(s["theta"]), covariates=tuple(s["covariates"]),
        censor=s["censor"], censor_p=float(s["censor_p"])))
    if s["method"] not in ("auto", "direct", "thinning"):
        raise ConfigError("simulation.method: expected auto, direct or thinning")

    return RunConfig(
        kernel=kernel, bandwidth=bw, bandwidth_candidates=tuple(cands), rounding=data["rounding"],
        level=float(data["level"]), features=features,
        eval_cells=cells if cells == "all" else tuple(cells), regimes=regimes,
        n_sims=data["n_sims"], quantiles=tuple(data["quantiles"]), seed=data["seed"],
        theta_box=(float(box[0]), float(box[1])), solver=solver, simulation=dict(s),
        trip_columns=dict(data["trip_columns"]), paths=dict(data["paths"]), raw=data,
    )


def load_config(path: str | None = None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then the JSON file (when it exists), then overrides."""
    data = default_config()
    path = path or CONFIG_PATH
    if os.path.exists(path):
        with open(path) as f:
            try:
                user = json.load(f)
            except json.JSONDecodeError as e:
                raise ConfigError(f"{path}: invalid JSON at line {e.lineno}: {e.msg}") from e
        if not isinstance(user, dict):
            raise ConfigError(f"{path}: top level must be an object")
        _merge(data, user)
    if overrides:
        _merge(data, overrides)
    return validate(data)


def save_config(cfg: RunConfig | dict, path: str | None = None) -> None:
    data = cfg.raw if isinstance(cfg, RunConfig) else cfg
    path = path or CONFIG_PATH
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as f:
        json.dump(data, f, indent=2)
