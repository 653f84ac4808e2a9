"""Localised log-likelihood, score and Hessian in panel and continuous-time form.

Both forms reduce to weighted event terms and weighted exposure terms:

    ℓ(θ, t0)  = (1/h) [ Σ_e w_e θᵀX_e  −  Σ_p W_p exp(θᵀX_p) ]
    ∂ℓ/∂θ     = (1/h) [ Σ_e w_e X_e    −  Σ_p W_p X_p exp(θᵀX_p) ]
    ∂²ℓ/∂θ²   = −(1/h) Σ_p W_p X_p X_pᵀ exp(θᵀX_p)

Panel form:  w_e = K((k − t0)/h)·count,  W_p = K((k − t0)/h)·cell_exposure.
Stream form: w_e = K((t_e − t0)/h),      W_p = h ∫_piece K(u) du.
Censored pieces are dropped before any sum. Sums are exactly rounded
(math.fsum), so results do not depend on record order.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from config import MAX_LINEAR_PREDICTOR
from engine.errors import IntensityOverflowError
from engine.kernels import Kernel, discrete_weights, kernel_eval, kernel_integral
from engine.model import CovariatePath, EventStream, Panel

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class LocalLikContext:
    """Kernel-weighted event and exposure terms of one evaluation window."""
    t0: float
    h: float
    kernel: Kernel
    event_w: np.ndarray
    event_X: np.ndarray
    expo_w: np.ndarray
    expo_X: np.ndarray
    active_size: int
    window_pairs: int = 0
    boundary: bool = False

    @property
    def q(self) -> int:
        return self.expo_X.shape[1]

    @property
    def scale(self) -> int:
        """|L_n(t0)|, falling back to the pairs seen in the window when t0 has none."""
        return max(1, self.active_size or self.window_pairs)

    def totals(self) -> tuple[float, float]:
        """(weighted events W, weighted exposure E)."""
        return _fsum(self.event_w), _fsum(self.expo_w)


def _fsum(a) -> float:
    return math.fsum(np.asarray(a, dtype=float).ravel().tolist())


def _augment_local_linear(X: np.ndarray, dt: np.ndarray) -> np.ndarray:
    """[X, (t − t0)·X] for the local-linear design."""
    return np.hstack([X, dt[:, None] * X])


# ── Context builders ────────────────────────────────────────────────────────────

def panel_context(panel: Panel, t0: float, kernel: Kernel, bandwidth: float, *,
                  exclude_t0: bool = False, local_linear: bool = False) -> LocalLikContext:
    """Window of a panel around cell t0 with weights K((k − t0)/bandwidth)."""
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    rec = panel.records
    cells = rec["cell"].to_numpy(dtype=float)
    censor = rec["censor"].to_numpy()
    counts = rec["count"].to_numpy(dtype=float)

    w = discrete_weights(kernel, cells - t0, bandwidth)
    keep = (w != 0.0) & (censor == 1)
    if exclude_t0:
        keep &= cells != t0

    X = panel.X[keep]
    if local_linear:
        X = _augment_local_linear(X, cells[keep] - t0)
    wk, nk = w[keep], counts[keep]
    has_events = nk > 0

    at_t0 = (cells == t0) & (censor == 1)
    active = int(at_t0.sum())
    window_pairs = int(len(set(zip(rec["i"].to_numpy()[keep].tolist(), rec["j"].to_numpy()[keep].tolist()))))

    lo, hi = kernel.support
    boundary = bool(t0 + lo * bandwidth < 0 or t0 + hi * bandwidth > panel.n_cells - 1)
    if boundary:
        logger.info("window around cell %s (h=%s) crosses the panel edge; no boundary correction", t0, bandwidth)

    return LocalLikContext(
        t0=float(t0), h=float(bandwidth), kernel=kernel,
        event_w=wk[has_events] * nk[has_events], event_X=X[has_events],
        expo_w=wk * panel.cell_exposure, expo_X=X,
        active_size=active, window_pairs=window_pairs, boundary=boundary,
    )


def stream_context(stream: EventStream, path: CovariatePath, t0: float, kernel: Kernel,
                   h: float) -> LocalLikContext:
    """Continuous-time window: exposure ∫K((t − t0)/h) C exp(θᵀX) dt over covariate pieces.

    Event covariates come from the piece (start, end] containing the jump.
    """
    if not h > 0:
        raise ValueError("bandwidth must be positive")
    xcols = [f"x_{m + 1}" for m in range(path.q)]
    p = path.pieces
    W = h * kernel_integral(kernel, (p["start"].to_numpy() - t0) / h, (p["end"].to_numpy() - t0) / h)
    W = np.atleast_1d(np.asarray(W, dtype=float))
    keep = (p["censor"].to_numpy() == 1) & (W != 0.0)
    expo_X = p.loc[keep, xcols].to_numpy(dtype=float)

    ev = stream.to_frame().rename(columns={"time_hours": "time"})
    ev = ev.astype({"time": float, "i": np.int64, "j": np.int64}).sort_values("time", kind="mergesort")
    right = p.astype({"start": float, "end": float}).sort_values("start", kind="mergesort")
    matched = pd.merge_asof(ev, right, left_on="time", right_on="start", by=["i", "j"],
                            direction="backward", allow_exact_matches=False)
    ok = (matched["censor"] == 1) & (matched["time"] <= matched["end"])
    matched = matched[ok.to_numpy(dtype=bool)]
    ew = kernel_eval(kernel, (matched["time"].to_numpy(dtype=float) - t0) / h)
    ew = np.atleast_1d(np.asarray(ew, dtype=float))
    nz = ew != 0.0

    covering = (p["start"] < t0) & (p["end"] >= t0) & (p["censor"] == 1)
    pairs_in_window = p.loc[keep, ["i", "j"]].drop_duplicates()
    lo, hi = kernel.support
    boundary = bool(t0 + lo * h < 0 or t0 + hi * h > stream.horizon)
    if boundary:
        logger.info("window around t0=%s h=%s crosses [0, %s]; no boundary correction", t0, h, stream.horizon)

    return LocalLikContext(
        t0=float(t0), h=float(h), kernel=kernel,
        event_w=ew[nz], event_X=matched.loc[:, xcols].to_numpy(dtype=float)[nz],
        expo_w=W[keep], expo_X=expo_X,
        active_size=int(covering.sum()), window_pairs=len(pairs_in_window), boundary=boundary,
    )


# ── Objective and derivatives ───────────────────────────────────────────────────

def linear_predictor(X: np.ndarray, theta) -> np.ndarray:
    return (X * np.asarray(theta, dtype=float)).sum(axis=1)


def _exposure_terms(ctx: LocalLikContext, theta) -> np.ndarray | None:
    eta = linear_predictor(ctx.expo_X, theta)
    if eta.size and eta.max() > MAX_LINEAR_PREDICTOR:
        return None
    return ctx.expo_w * np.exp(eta)


def local_loglik(ctx: LocalLikContext, theta) -> float:
    """ℓ(θ, t0); returns -inf when θᵀX exceeds the overflow guard."""
    theta = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(theta)):
        raise ValueError("theta must be finite")
    expo = _exposure_terms(ctx, theta)
    if expo is None:
        logger.debug("overflow guard hit at theta=%s", theta)
        return -math.inf
    events = ctx.event_w * linear_predictor(ctx.event_X, theta)
    return math.fsum(events.tolist() + (-expo).tolist()) / ctx.h


def score(ctx: LocalLikContext, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    expo = _exposure_terms(ctx, theta)
    if expo is None:
        raise IntensityOverflowError(f"θᵀX > {MAX_LINEAR_PREDICTOR} at θ={theta}")
    ev = ctx.event_X * ctx.event_w[:, None]
    ex = ctx.expo_X * expo[:, None]
    return np.array([
        math.fsum(ev[:, m].tolist() + (-ex[:, m]).tolist()) for m in range(ctx.q)
    ]) / ctx.h


def hessian(ctx: LocalLikContext, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    expo = _exposure_terms(ctx, theta)
    if expo is None:
        raise IntensityOverflowError(f"θᵀX > {MAX_LINEAR_PREDICTOR} at θ={theta}")
    q = ctx.q
    weighted = ctx.expo_X * expo[:, None]
    H = np.empty((q, q))
    for a in range(q):
        for b in range(a, q):
            H[a, b] = H[b, a] = -_fsum(weighted[:, a] * ctx.expo_X[:, b]) / ctx.h
    return H
