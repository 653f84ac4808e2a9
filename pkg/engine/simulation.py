"""Event simulation: designs, continuous-time streams, per-cell Poisson panels, Monte Carlo studies.

Random streams come from counter-based Philox generators keyed by
(seed, purpose, index), so every pair / cell / replicate draws from its own
stream regardless of scheduling:

    purpose 0  covariates of cell c
    purpose 1  counts of cell c
    purpose 2  event times of pair p
    purpose 3  frozen Bernoulli selectors
    purpose 4  replicate seeds
"""
from __future__ import annotations

import logging
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
from scipy.stats import anderson

from config import MAX_LINEAR_PREDICTOR, max_workers
from engine.errors import IntensityOverflowError, NetcoxError
from engine.estimator import SolverConfig, fit_at, z_multiplier
from engine.likelihood import linear_predictor, panel_context
from engine.model import EventStream, ModelSpec, Panel, ParameterCurve, x_columns

logger = logging.getLogger(__name__)

_COVARIATES, _COUNTS, _STREAM, _SELECTOR, _REPLICATE = range(5)
CENSOR_RULES = ("all", "none", "bernoulli", "replay")
STUDY_LEVELS = (0.90, 0.95, 0.99)


def generator(seed: int, purpose: int, index: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(purpose, int(index)))))


def child_seed(seed: int, index: int, purpose: int = _REPLICATE) -> int:
    """64-bit seed of replicate `index` derived from a master seed."""
    state = np.random.SeedSequence(int(seed), spawn_key=(purpose, int(index))).generate_state(1, np.uint64)
    return int(state[0])


def pair_universe(n_nodes: int, directed: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """All pairs in canonical order: i < j lexicographically, or every ordered i != j."""
    if directed:
        i, j = np.meshgrid(np.arange(1, n_nodes + 1), np.arange(1, n_nodes + 1), indexing="ij")
        keep = i != j
        return i[keep].astype(np.int64), j[keep].astype(np.int64)
    i, j = np.triu_indices(n_nodes, k=1)
    return (i + 1).astype(np.int64), (j + 1).astype(np.int64)


def configuration_model_p(kappa: float, n_nodes: int) -> float:
    """Selector probability κ/n, capped at 1."""
    return min(1.0, float(kappa) / n_nodes)


# ── Designs ─────────────────────────────────────────────────────────────────────

def _parse_covariate(rule: str) -> tuple[str, float | None]:
    name, _, arg = rule.partition(":")
    name = name.strip().lower()
    if name == "bernoulli":
        p = float(arg) if arg else 0.5
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"bernoulli covariate probability {p} outside [0, 1]")
        return name, p
    if name in ("intercept", "uniform", "normal", "replay"):
        return name, None
    raise ValueError(f"Unknown covariate rule: {rule!r}")


@dataclass(frozen=True, eq=False)
class SimDesign:
    """Network size, cell grid, true θ0 curve, covariate and selector rules, seed.

    The θ0 curve is indexed in cell units: θ(t) = curve.at(t / cell_length).
    Covariates are redrawn per pair per cell (piecewise constant over cells);
    Bernoulli selectors are frozen per pair over the whole horizon.
    """
    n_nodes: int
    n_cells: int
    true_curve: ParameterCurve
    covariates: tuple = ("intercept",)
    censor: str = "all"
    censor_p: float = 1.0
    cell_length: float = 24.0
    seed: int = 0
    directed: bool = False
    replay: Panel | None = None

    def __post_init__(self):
        if self.n_nodes < 2:
            raise ValueError("a network needs at least two nodes")
        if self.n_cells < 1 or not self.cell_length > 0:
            raise ValueError("n_cells and cell_length must be positive")
        object.__setattr__(self, "covariates", tuple(self.covariates))
        rules = [_parse_covariate(c) for c in self.covariates]
        if len(rules) != self.true_curve.q:
            raise ValueError(f"{len(rules)} covariate rules for a θ0 of dimension {self.true_curve.q}")
        if self.censor not in CENSOR_RULES:
            raise ValueError(f"Unknown censor rule: {self.censor!r} (expected one of {CENSOR_RULES})")
        if not 0.0 <= self.censor_p <= 1.0:
            raise ValueError("censor_p must lie in [0, 1]")
        needs_replay = self.censor == "replay" or any(r[0] == "replay" for r in rules)
        if needs_replay and self.replay is None:
            raise ValueError("replay rules need a replay panel")
        if self.seed < 0:
            raise ValueError("seed must be a nonnegative integer")

    @property
    def horizon(self) -> float:
        return self.n_cells * self.cell_length

    @property
    def q(self) -> int:
        return self.true_curve.q

    @property
    def is_stationary(self) -> bool:
        """Constant θ0, constant selectors and no replayed covariates."""
        return (
            self.true_curve.is_constant
            and self.censor in ("all", "none", "bernoulli")
            and all(_parse_covariate(c)[0] != "replay" for c in self.covariates)
        )

    def theta_at_cell(self, cell) -> np.ndarray:
        return self.true_curve.at(cell)


def _replay_lookup(design: SimDesign, cell: int, i: np.ndarray, j: np.ndarray) -> pd.DataFrame:
    rec = design.replay.records
    sub = rec[rec["cell"] == cell].set_index(["i", "j"])
    idx = pd.MultiIndex.from_arrays([i, j])
    return sub.reindex(idx)


def design_panel(design: SimDesign) -> Panel:
    """Covariates and selectors of a design as a Panel with zero counts."""
    i, j = pair_universe(design.n_nodes, design.directed)
    n_pairs = i.size
    rules = [_parse_covariate(c) for c in design.covariates]

    if design.censor == "all":
        frozen = np.ones(n_pairs, dtype=np.int64)
    elif design.censor == "none":
        frozen = np.zeros(n_pairs, dtype=np.int64)
    elif design.censor == "bernoulli":
        frozen = (generator(design.seed, _SELECTOR).random(n_pairs) < design.censor_p).astype(np.int64)
    else:
        frozen = None

    frames = []
    for cell in range(design.n_cells):
        rng = generator(design.seed, _COVARIATES, cell)
        replayed = _replay_lookup(design, cell, i, j) if design.replay is not None else None
        cols = {}
        for m, (name, arg) in enumerate(rules):
            if name == "intercept":
                cols[f"x_{m + 1}"] = np.ones(n_pairs)
            elif name == "bernoulli":
                cols[f"x_{m + 1}"] = (rng.random(n_pairs) < arg).astype(float)
            elif name == "uniform":
                cols[f"x_{m + 1}"] = rng.random(n_pairs)
            elif name == "normal":
                cols[f"x_{m + 1}"] = rng.standard_normal(n_pairs)
            else:
                cols[f"x_{m + 1}"] = replayed[f"x_{m + 1}"].fillna(0.0).to_numpy(dtype=float)
        if frozen is None:
            censor = replayed["censor"].fillna(0).to_numpy().astype(np.int64)
        else:
            censor = frozen
        frame = pd.DataFrame({"cell": cell, "i": i, "j": j, "count": 0, "censor": censor, **cols})
        frames.append(frame[frame["censor"] == 1])

    records = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame()
    if records.empty:
        records = pd.DataFrame(columns=["cell", "i", "j", "count", "censor"] + x_columns(design.q))
    return Panel(design.n_nodes, design.n_cells, records, design.covariates,
                 cell_times=np.arange(design.n_cells) * design.cell_length + 0.5 * design.cell_length,
                 directed=design.directed)


# ── Panels ──────────────────────────────────────────────────────────────────────

def _guarded_rate(X: np.ndarray, theta) -> np.ndarray:
    eta = linear_predictor(X, theta)
    if eta.size and eta.max() > MAX_LINEAR_PREDICTOR:
        raise IntensityOverflowError(f"θᵀX reaches {eta.max():.1f} > {MAX_LINEAR_PREDICTOR}")
    return np.exp(eta)


def simulate_panel_counts(panel: Panel, theta, seed: int, cells=None) -> Panel:
    """Draw count ~ Poisson(exp(θᵀX)·cell_exposure) for every uncensored (cell, pair).

    `theta` is a q-vector or a ParameterCurve indexed by cell. Censored rows
    get 0; cells outside `cells` keep count 0.
    """
    rec = panel.records
    counts = np.zeros(len(rec), dtype=np.int64)
    cell_col = rec["cell"].to_numpy()
    unc = rec["censor"].to_numpy() == 1
    X = panel.X
    targets = range(panel.n_cells) if cells is None else sorted(set(int(c) for c in cells))
    for cell in targets:
        panel._check_cell(cell)
        rows = np.flatnonzero((cell_col == cell) & unc)
        if rows.size == 0:
            continue
        th = theta.at(cell) if isinstance(theta, ParameterCurve) else np.asarray(theta, dtype=float)
        lam = _guarded_rate(X[rows], th) * panel.cell_exposure
        counts[rows] = generator(seed, _COUNTS, cell).poisson(lam)
    return panel.with_counts(counts)


# ── Streams ─────────────────────────────────────────────────────────────────────

def _piece_supremum(design: SimDesign, x: np.ndarray, a: float, b: float) -> float:
    """max θ(t)ᵀx over a cell; θ is piecewise linear so the max sits at a cell end or a knot."""
    lo, hi = a / design.cell_length, b / design.cell_length
    knots = design.true_curve.eval_times
    grid = np.concatenate([[lo, hi], knots[(knots > lo) & (knots < hi)]])
    return float(np.max(design.true_curve.at(grid) @ x))


def simulate_stream(design: SimDesign, method: str = "auto") -> EventStream:
    """Events per active pair from the inhomogeneous Poisson process with
    intensity C·exp(θ0(t)ᵀX(t)).

    direct:   per cell Poisson(λ·L) events placed uniformly (constant θ0 only)
    thinning: per cell candidates at the cell supremum, kept with prob. λ(t)/λ_max
    """
    if method not in ("auto", "direct", "thinning"):
        raise ValueError(f"Unknown simulation method: {method!r}")
    if method == "auto":
        method = "direct" if design.true_curve.is_constant else "thinning"
    if method == "direct" and not design.true_curve.is_constant:
        raise ValueError("direct simulation needs a constant θ0; use thinning")

    panel = design_panel(design)
    rec = panel.records
    if rec.empty:
        return EventStream.empty(design.n_nodes, design.horizon, design.directed)

    L = design.cell_length
    ui, uj = pair_universe(design.n_nodes, design.directed)
    pair_index = {(a, b): p for p, (a, b) in enumerate(zip(ui.tolist(), uj.tolist()))}
    X_all = panel.X

    times, src, dst = [], [], []
    for (a, b), rows in rec.groupby(["i", "j"], sort=True).indices.items():
        rng = generator(design.seed, _STREAM, pair_index[(a, b)])
        for r in rows:
            if rec["censor"].iat[r] != 1:
                continue
            cell = int(rec["cell"].iat[r])
            x = X_all[r]
            start, end = cell * L, (cell + 1) * L
            if method == "direct":
                lam = float(_guarded_rate(x[None, :], design.true_curve.values[0])[0])
                n = rng.poisson(lam * L)
                t = end - L * rng.random(n)
            else:
                sup = _piece_supremum(design, x, start, end)
                if sup > MAX_LINEAR_PREDICTOR:
                    raise IntensityOverflowError(f"θᵀX reaches {sup:.1f} > {MAX_LINEAR_PREDICTOR}")
                lam_max = math.exp(sup)
                n = rng.poisson(lam_max * L)
                cand = end - L * rng.random(n)
                if n:
                    lam = np.exp(design.true_curve.at(cand / L).reshape(n, design.q) @ x)
                    t = cand[rng.random(n) * lam_max < lam]
                else:
                    t = cand
            times.append(t)
            src.append(np.full(t.size, a, dtype=np.int64))
            dst.append(np.full(t.size, b, dtype=np.int64))

    if not times:
        return EventStream.empty(design.n_nodes, design.horizon, design.directed)
    stream = EventStream(design.n_nodes, design.horizon, np.concatenate(times),
                         np.concatenate(src), np.concatenate(dst), design.directed)
    logger.debug("simulated %d events on %d pairs (%s)", len(stream), len(pair_index), method)
    return stream


# ── Monte Carlo normality study ─────────────────────────────────────────────────

@dataclass
class StudyReport:
    n_reps: int
    t0: float
    theta0: list
    n_excluded: int
    excluded_reasons: dict = field(default_factory=dict)
    coordinates: list = field(default_factory=list)

    def to_dict(self) -> dict:
        def _clean(v):
            return None if isinstance(v, float) and not math.isfinite(v) else v
        return {
            "n_reps": self.n_reps,
            "t0": self.t0,
            "theta0": self.theta0,
            "n_excluded": self.n_excluded,
            "excluded_fraction": self.n_excluded / self.n_reps if self.n_reps else 0.0,
            "excluded_reasons": self.excluded_reasons,
            "coordinates": [{k: _clean(v) for k, v in c.items()} for c in self.coordinates],
        }


def _inverse_sqrt(cov: np.ndarray) -> np.ndarray:
    lam, V = np.linalg.eigh(cov)
    return (V / np.sqrt(lam)) @ V.T


def mc_normality_study(design: SimDesign, spec: ModelSpec, cfg: SolverConfig | None = None,
                       n_reps: int = 400, t0: int | None = None) -> StudyReport:
    """Simulate, fit at t0 and standardise θ̂ − θ0 over independent replicates.

    Formulae:
        z = Ĉov^(-1/2) (θ̂ − θ0)
        coverage_L = share of replicates with |θ̂_m − θ0_m| <= z_{(1+L)/2}·se_m
    Restricted to stationary designs, where the smoothing bias vanishes.
    """
    if not design.is_stationary:
        raise ValueError("mc_normality_study needs a stationary design with constant selectors")
    if n_reps < 1:
        raise ValueError("n_reps must be positive")
    cfg = cfg or SolverConfig()
    t0 = design.n_cells // 2 if t0 is None else int(t0)
    theta0 = design.true_curve.values[0]
    multipliers = {lvl: z_multiplier(lvl) for lvl in STUDY_LEVELS}

    def _replicate(r):
        d = replace(design, seed=child_seed(design.seed, r))
        try:
            panel = simulate_panel_counts(design_panel(d), theta0, d.seed)
            fit = fit_at(panel_context(panel, t0, spec.kernel, spec.bandwidth), spec, cfg)
        except NetcoxError as e:
            return type(e).__name__
        err = fit.theta_hat - theta0
        return err, _inverse_sqrt(fit.covariance) @ err, fit.std_errors

    with ThreadPoolExecutor(max_workers=max_workers()) as pool:
        outcomes = list(pool.map(_replicate, range(n_reps)))

    reasons = Counter(o for o in outcomes if isinstance(o, str))
    kept = [o for o in outcomes if not isinstance(o, str)]
    n_excluded = n_reps - len(kept)
    if n_excluded:
        logger.info("%d of %d replicates excluded: %s", n_excluded, n_reps, dict(reasons))

    coords = []
    for m in range(design.q):
        if kept:
            err = np.array([k[0][m] for k in kept])
            z = np.array([k[1][m] for k in kept])
            se = np.array([k[2][m] for k in kept])
            cov = {f"coverage_{round(lvl * 100)}": float(np.mean(np.abs(err) <= mult * se))
                   for lvl, mult in multipliers.items()}
            ad = float(anderson(z, dist="norm").statistic) if z.size >= 3 else math.nan
            stats = dict(mean_z=float(z.mean()), var_z=float(z.var(ddof=1)) if z.size > 1 else math.nan,
                         ad_stat=ad, rmse=float(np.sqrt(np.mean(err ** 2))))
        else:
            cov = {f"coverage_{round(lvl * 100)}": math.nan for lvl in STUDY_LEVELS}
            stats = dict(mean_z=math.nan, var_z=math.nan, ad_stat=math.nan, rmse=math.nan)
        coords.append({"coordinate": m + 1, **cov, **stats, "n_excluded": n_excluded})

    return StudyReport(n_reps=n_reps, t0=float(t0), theta0=theta0.tolist(), n_excluded=n_excluded,
                       excluded_reasons=dict(reasons), coordinates=coords)
