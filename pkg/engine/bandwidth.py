"""One-sided cross-validation bandwidth selection with transfer to the two-sided kernel."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from config import DEFAULT_THETA_BOX, MAX_LINEAR_PREDICTOR, max_workers
from engine.errors import InsufficientHistoryError, IntensityOverflowError, NetcoxError
from engine.estimator import SolverConfig, maximize
from engine.kernels import Kernel, bandwidth_transfer_factor, discrete_weights, equivalent_local_linear, one_sided
from engine.likelihood import linear_predictor, panel_context
from engine.model import Panel, SolverDiagnostics

logger = logging.getLogger(__name__)

ROUNDING_MODES = ("nearest", "floor")


@dataclass(frozen=True, eq=False)
class OneSidedFit:
    """Strictly-past fit at one cell and its intensity predictions for that cell."""
    cell: int
    mu0: np.ndarray
    mu1: np.ndarray | None
    predicted: np.ndarray
    observed: np.ndarray
    solver: SolverDiagnostics


@dataclass(frozen=True)
class CvScore:
    h: int
    err: float
    cells_scored: int
    cells_skipped: int


@dataclass
class CvResult:
    scores: list
    h_l: int
    factor: float
    h_k: int
    rounding: str = "nearest"
    failed: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "errors": [{"h": s.h, "err": s.err, "cells_skipped": s.cells_skipped} for s in self.scores],
            "h_l": self.h_l,
            "factor": self.factor,
            "h_k": self.h_k,
            "rounding": self.rounding,
            "failed": self.failed,
        }


def _box(q: int, box) -> np.ndarray:
    box = np.asarray(DEFAULT_THETA_BOX if box is None else box, dtype=float)
    return np.tile(box, (q, 1)) if box.shape == (2,) else box


def _past_cells(panel: Panel, cell: int, kernel: Kernel, bandwidth: float) -> int:
    rec = panel.records
    unc = rec[(rec["censor"] == 1) & (rec["cell"] != cell)]
    cells = np.unique(unc["cell"].to_numpy())
    w = discrete_weights(kernel, cells - cell, bandwidth)
    return int(np.count_nonzero(np.asarray(w) > 0))


def _one_sided_fit(panel: Panel, cell: int, kernel: Kernel, bandwidth: float, local_linear: bool,
                   box, cfg: SolverConfig | None, init) -> OneSidedFit:
    need = 2 if local_linear else 1
    n_past = _past_cells(panel, cell, kernel, bandwidth)
    if n_past < need:
        raise InsufficientHistoryError(
            f"cell {cell}: {n_past} past cell(s) with positive weight at h={bandwidth}; need {need}")

    ctx = panel_context(panel, cell, kernel, bandwidth, exclude_t0=True, local_linear=local_linear)
    q = panel.q
    base = _box(q, box)
    full_box = np.vstack([base, base]) if local_linear else base
    theta, diag, _ = maximize(ctx, full_box, cfg or SolverConfig(), init)
    mu0 = theta[:q]
    mu1 = theta[q:] if local_linear else None

    frame = panel.cell_frame(cell)
    frame = frame[frame["censor"] == 1]
    eta = linear_predictor(frame[panel.x_columns].to_numpy(dtype=float), mu0)
    if eta.size and eta.max() > MAX_LINEAR_PREDICTOR:
        raise IntensityOverflowError(f"prediction at cell {cell} overflows (θᵀX = {eta.max():.1f})")
    return OneSidedFit(cell, mu0, mu1, np.exp(eta) * panel.cell_exposure,
                       frame["count"].to_numpy(dtype=float), diag)


def one_sided_local_linear_fit(panel: Panel, cell: int, kernel: Kernel, bandwidth: float,
                               box=None, cfg: SolverConfig | None = None, init=None) -> OneSidedFit:
    """Maximise the local-linear objective with [μ0 + μ1 (k − cell)]ᵀX on strictly past cells.

    (μ0, μ1) share the Θ box; predictions use μ0 only. Needs two distinct
    past cells with positive weight for μ1 to be identified.

    Weights are K*((k − cell)/h), so the window holds cells cell−h+1 .. cell−1:
    the triangular K* vanishes at u = −1 and cell−h gets weight zero. Hence
    h = 1 has no past cell and h = 2 only one; both raise
    InsufficientHistoryError here and land in CvResult.failed during selection.
    """
    return _one_sided_fit(panel, cell, kernel, bandwidth, True, box, cfg, init)


def one_sided_local_constant_fit(panel: Panel, cell: int, kernel: Kernel, bandwidth: float,
                                 box=None, cfg: SolverConfig | None = None, init=None) -> OneSidedFit:
    return _one_sided_fit(panel, cell, kernel, bandwidth, False, box, cfg, init)


def pearson_error(predicted, observed) -> float:
    """Mean of (pred − obs)² / pred over pairs; inf when a prediction underflows to 0."""
    predicted = np.asarray(predicted, dtype=float)
    observed = np.asarray(observed, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = (predicted - observed) ** 2 / predicted
    if not np.isfinite(terms).all():
        return math.inf
    return math.fsum(terms.tolist()) / terms.size


def scored_cells(panel: Panel) -> list[int]:
    return sorted(panel.records.loc[panel.records["censor"] == 1, "cell"].unique().tolist())


def cv_error(panel: Panel, kernel: Kernel, bandwidth: float, cells=None, box=None,
             cfg: SolverConfig | None = None, local_linear: bool = True) -> CvScore:
    """One-sided CV prediction error at one bandwidth.

    Formula:
        CV(h) = (1/#cells) Σ_k (1/|L(k)|) Σ_{(i,j) in L(k)} (exp(μ̂0ᵀX) − N_ij(k))² / exp(μ̂0ᵀX)
    with μ̂0 fitted on cells < k. Cells that cannot be fitted are skipped and counted.
    """
    cells = scored_cells(panel) if cells is None else list(cells)
    fit_fn = one_sided_local_linear_fit if local_linear else one_sided_local_constant_fit
    per_cell, skipped, init = [], 0, None
    for k in cells:
        try:
            fit = fit_fn(panel, k, kernel, bandwidth, box, cfg, init)
        except NetcoxError as e:
            skipped += 1
            logger.debug("h=%s cell %s skipped: %s", bandwidth, k, e)
            continue
        init = np.concatenate([fit.mu0, fit.mu1]) if fit.mu1 is not None else fit.mu0
        if not fit.predicted.size:
            continue
        err = pearson_error(fit.predicted, fit.observed)
        if not math.isfinite(err):
            skipped += 1
            logger.debug("h=%s cell %s skipped: prediction underflows to zero", bandwidth, k)
            continue
        per_cell.append(err)
    if not per_cell:
        raise InsufficientHistoryError(f"no cell could be scored at h={bandwidth}")
    if skipped:
        logger.info("h=%s: %d of %d cells skipped", bandwidth, skipped, len(cells))
    return CvScore(int(bandwidth), math.fsum(per_cell) / len(per_cell), len(per_cell), skipped)


def transfer_bandwidth(h_l: float, factor: float, rounding: str = "nearest") -> int:
    """h_K = h_L·factor rounded to an integer >= 1."""
    if rounding not in ROUNDING_MODES:
        raise ValueError(f"rounding must be one of {ROUNDING_MODES}")
    raw = h_l * factor
    return max(1, int(math.floor(raw + 0.5)) if rounding == "nearest" else int(math.floor(raw)))


def cv_transfer_factor(target: Kernel) -> float:
    """Factor from the local-linear equivalent of the one-sided target to the target (≈ 1/1.82 triangular)."""
    target = target.unit()
    return bandwidth_transfer_factor(equivalent_local_linear(one_sided(target)), target)


def select_bandwidth(panel: Panel, target: Kernel, candidates, rounding: str = "nearest", cells=None,
                     box=None, cfg: SolverConfig | None = None) -> CvResult:
    """Two-step selector: h_L = argmin CV(h) with the one-sided kernel (ties: smallest h),
    then h_K = round(h_L · factor).
    """
    raw = list(candidates)
    if not raw:
        raise ValueError("candidate set is empty")
    if any(float(h) != int(h) or int(h) < 1 for h in raw):
        raise ValueError("candidate bandwidths must be integers >= 1")
    cands = sorted({int(h) for h in raw})
    if rounding not in ROUNDING_MODES:
        raise ValueError(f"rounding must be one of {ROUNDING_MODES}")
    k_star = one_sided(target.unit())
    factor = cv_transfer_factor(target)

    def _score(h):
        try:
            return cv_error(panel, k_star, h, cells, box, cfg)
        except NetcoxError as e:
            return e

    with ThreadPoolExecutor(max_workers=max_workers()) as pool:
        results = list(pool.map(_score, cands))

    scores = [r for r in results if isinstance(r, CvScore)]
    failed = {h: f"{type(r).__name__}: {r}" for h, r in zip(cands, results) if not isinstance(r, CvScore)}
    for h, msg in failed.items():
        logger.warning("candidate h=%d failed: %s", h, msg)
    if not scores:
        raise InsufficientHistoryError("no candidate bandwidth could be scored")
    best = min(scores, key=lambda s: (s.err, s.h))
    h_k = transfer_bandwidth(best.h, factor, rounding)
    logger.info("selected h_L=%d, factor=%.4f, h_K=%d", best.h, factor, h_k)
    return CvResult(scores, best.h, factor, h_k, rounding, failed)
