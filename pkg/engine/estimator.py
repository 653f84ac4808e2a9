"""Local maximum likelihood: damped Newton fits, plug-in covariance, bands, diagnostics."""
from __future__ import annotations

import json
import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.optimize import linprog
from scipy.stats import norm

from config import max_workers
from engine.errors import (
    ConvergenceWarning, NetcoxError, NoExposureError, SingularCovarianceError, UnboundedMLEError,
)
from engine.kernels import kernel_l2
from engine.likelihood import LocalLikContext, hessian, local_loglik, panel_context, score
from engine.model import FitResult, ModelSpec, Panel, ParameterCurve, SolverDiagnostics

logger = logging.getLogger(__name__)

_SINGULAR_RTOL = 1e-10
# Margins on unit-normalised rows for a recession direction
_RECESSION_MARGIN = 1e-6
_RECESSION_SLACK = 1e-8
# Relative slack on ℓ when accepting a step: rounding noise near the optimum
_ACCEPT_RTOL = 1e-12


@dataclass(frozen=True)
class SolverConfig:
    grad_tol: float = 1e-8          # on ‖score‖∞ / |L_n(t0)|
    max_iter: int = 100
    step_halving_max: int = 40
    ridge_floor: float = 1e-10      # smallest admissible relative curvature
    warm_start: bool = True

    def __post_init__(self):
        for name in ("grad_tol", "max_iter", "step_halving_max", "ridge_floor"):
            if not getattr(self, name) > 0:
                raise ValueError(f"SolverConfig.{name} must be positive")


@dataclass(frozen=True)
class KantorovichDiagnostic:
    """Newton–Kantorovich quantities; r <= 1/2 certifies a root within 2η."""
    B: float
    eta: float
    K_lip: float
    r: float

    @property
    def certified(self) -> bool:
        return self.r <= 0.5


@dataclass(frozen=True, eq=False)
class CurveFit:
    curve: ParameterCurve
    fits: list
    errors: dict = field(default_factory=dict)


# ── Newton iterations ───────────────────────────────────────────────────────────

def _project(theta: np.ndarray, box: np.ndarray) -> np.ndarray:
    return np.clip(theta, box[:, 0], box[:, 1])


def _check_curvature(H: np.ndarray, g: np.ndarray, ridge_floor: float, tol: float) -> None:
    lam, V = np.linalg.eigh(-H)
    if lam[0] > ridge_floor * max(1.0, lam[-1]):
        return
    v = V[:, 0]
    slope = float(g @ v)
    if abs(slope) > tol:
        raise UnboundedMLEError("local likelihood increases without bound", np.sign(slope) * v)
    raise SingularCovarianceError("curvature is singular; covariates are collinear", v)


def _unbounded_direction(ctx: LocalLikContext) -> np.ndarray:
    mean_x = ctx.expo_w @ ctx.expo_X
    nrm = np.linalg.norm(mean_x)
    return -mean_x / nrm if nrm > 0 else -np.eye(ctx.q)[0]


def _unit_rows(X: np.ndarray) -> np.ndarray:
    nrm = np.linalg.norm(X, axis=1)
    X = X[nrm > 0] / nrm[nrm > 0, None]
    return np.unique(np.round(X, 12), axis=0) if X.size else X.reshape(0, X.shape[1])


def recession_direction(ctx: LocalLikContext) -> np.ndarray | None:
    """Unit d along which ℓ never decreases, or None when the maximiser exists.

    d qualifies when dᵀX = 0 on every event row and dᵀX <= 0 on every exposure
    row, strictly on at least one (a covariate level that never fires). Found
    by a linear program over the distinct rows; signed kernels are skipped.
    """
    if ctx.kernel.signed:
        return None
    Xe = _unit_rows(ctx.event_X[ctx.event_w > 0])
    Xp = _unit_rows(ctx.expo_X[ctx.expo_w > 0])
    if not len(Xp):
        return None
    eq = dict(A_eq=Xe, b_eq=np.zeros(len(Xe))) if len(Xe) else {}
    res = linprog(Xp.sum(axis=0), A_ub=Xp, b_ub=np.zeros(len(Xp)), bounds=[(-1.0, 1.0)] * ctx.q,
                  method="highs", **eq)
    if res.status != 0 or not res.fun < -_RECESSION_MARGIN:
        return None
    d = res.x / np.linalg.norm(res.x)
    on_events = np.abs(Xe @ d).max() if len(Xe) else 0.0
    on_expo = Xp @ d
    if on_events > _RECESSION_SLACK or on_expo.max() > _RECESSION_SLACK or not on_expo.min() < -_RECESSION_MARGIN:
        return None
    return d


def maximize(ctx: LocalLikContext, box: np.ndarray, cfg: SolverConfig,
             init=None) -> tuple[np.ndarray, SolverDiagnostics, float]:
    """Damped Newton ascent on ℓ(·, t0), projected into the box.

    Full Newton step, halved until ℓ does not decrease; converged once
    ‖score‖∞ <= grad_tol·|L_n(t0)|.
    """
    W, E = ctx.totals()
    if ctx.expo_w.size == 0 or not E > 0:
        raise NoExposureError(f"no uncensored exposure in the window around t0={ctx.t0}")
    if ctx.event_w.size == 0 or (not ctx.kernel.signed and not W > 0):
        raise UnboundedMLEError(f"no events in the window around t0={ctx.t0}", _unbounded_direction(ctx))
    direction = recession_direction(ctx)
    if direction is not None:
        raise UnboundedMLEError(
            f"local MLE does not exist at t0={ctx.t0}: likelihood increases along {np.round(direction, 6)}",
            direction)

    box = np.asarray(box, dtype=float)
    theta = _project(np.zeros(ctx.q) if init is None else np.asarray(init, dtype=float), box)
    ll = local_loglik(ctx, theta)
    if not np.isfinite(ll):
        theta = _project(np.zeros(ctx.q), box)
        ll = local_loglik(ctx, theta)

    tol = cfg.grad_tol * ctx.scale
    converged, halvings, it = False, 0, 0
    g = score(ctx, theta)
    while True:
        gnorm = float(np.max(np.abs(g)))
        if gnorm <= tol:
            converged = True
            break
        if it >= cfg.max_iter:
            break
        it += 1
        H = hessian(ctx, theta)
        _check_curvature(H, g, cfg.ridge_floor, tol)
        step = np.linalg.solve(-H, g)

        alpha, accepted = 1.0, False
        for _ in range(cfg.step_halving_max + 1):
            cand = _project(theta + alpha * step, box)
            ll_c = local_loglik(ctx, cand)
            if ll_c >= ll - _ACCEPT_RTOL * max(1.0, abs(ll)):
                accepted = True
                break
            alpha *= 0.5
            halvings += 1
        if not accepted or np.array_equal(cand, theta):
            logger.debug("Newton stalled at iteration %d (theta=%s)", it, theta)
            break
        theta, ll = cand, ll_c
        g = score(ctx, theta)
        logger.debug("iter %d: ll=%.10g |g|=%.3e alpha=%.3g", it, ll, np.max(np.abs(g)), alpha)

    if not converged:
        outward = ((theta <= box[:, 0]) & (g < 0)) | ((theta >= box[:, 1]) & (g > 0))
        if outward.any():
            direction = np.where(outward, np.sign(g), 0.0)
            raise UnboundedMLEError(
                f"maximiser leaves the parameter box at t0={ctx.t0}", direction / np.linalg.norm(direction))
        warnings.warn(f"Newton did not converge at t0={ctx.t0} (|g|={gnorm:.3e})", ConvergenceWarning)

    return theta, SolverDiagnostics(it, gnorm, converged, None, halvings), ll


def fit_at(ctx: LocalLikContext, spec: ModelSpec, cfg: SolverConfig | None = None,
           init=None) -> FitResult:
    """θ̂(t0) = argmax ℓ(θ, t0) with plug-in covariance and Kantorovich diagnostic."""
    cfg = cfg or SolverConfig()
    if spec.q != ctx.q:
        raise ValueError(f"ModelSpec has q={spec.q} but the context has {ctx.q} covariates")
    theta, diag, ll = maximize(ctx, spec.theta_box, cfg, init)
    cov = asymptotic_covariance(ctx, theta, spec)
    try:
        r = kantorovich_check(ctx, theta).r
    except NetcoxError:
        r = None
    diag = SolverDiagnostics(diag.iterations, diag.grad_norm, diag.converged, r, diag.step_halvings)
    return FitResult(
        t0=ctx.t0, theta_hat=theta, covariance=cov, std_errors=np.sqrt(np.diag(cov)),
        active_size=ctx.active_size, effective_scale=ctx.scale * ctx.h, solver=diag,
        boundary=ctx.boundary, loglik=ll,
    )


# ── Inference ───────────────────────────────────────────────────────────────────

def asymptotic_covariance(ctx: LocalLikContext, theta_hat, spec: ModelSpec | None = None) -> np.ndarray:
    """Plug-in covariance from asymptotic normality.

    Formulae:
        Σ̂   = −(1/|L_n(t0)|) ∂²ℓ(θ̂, t0)      (∂²ℓ already carries 1/h)
        Cov = ∫K² du · Σ̂⁻¹ / (|L_n(t0)| · h)
    Weights scaled by c (the scale the context was built with) are divided out
    so the unit kernel's ∫K² applies.
    """
    kernel = ctx.kernel
    if spec is not None and spec.kernel.unit() != kernel.unit():
        raise ValueError(f"ModelSpec kernel {spec.kernel.name} does not match the context kernel {kernel.name}")
    n_active = ctx.scale
    sigma = -hessian(ctx, theta_hat) / (n_active * kernel.scale)
    lam, V = np.linalg.eigh(sigma)
    if lam[0] <= _SINGULAR_RTOL * max(abs(lam[-1]), np.finfo(float).tiny):
        raise SingularCovarianceError("Σ̂ is singular; covariates are collinear", V[:, 0])
    inv = (V / lam) @ V.T
    cov = kernel_l2(kernel.unit()) * inv / (n_active * ctx.h)
    return 0.5 * (cov + cov.T)


def z_multiplier(level: float) -> float:
    """Two-sided standard-normal multiplier z_{(1+level)/2}; 0.99 gives 2.5758."""
    if not 0.0 <= level < 1.0:
        raise ValueError("confidence level must lie in [0, 1)")
    return float(norm.ppf(0.5 * (1.0 + level)))


def confidence_band(fit: FitResult, level: float = 0.99) -> tuple[np.ndarray, np.ndarray]:
    """Per-coordinate θ̂_m ± z·se_m."""
    z = z_multiplier(level)
    return fit.theta_hat - z * fit.std_errors, fit.theta_hat + z * fit.std_errors


def kantorovich_check(ctx: LocalLikContext, theta) -> KantorovichDiagnostic:
    """B, η, K and r = B·K·η for the |L_n(t0)|-normalised objective.

    K is a symmetric finite difference of the Hessian along the Newton direction
    with step max(η, 1e-6); r <= 1/2 is reported, never enforced.
    """
    theta = np.asarray(theta, dtype=float)
    n_active = ctx.scale
    g = score(ctx, theta) / n_active
    H = hessian(ctx, theta) / n_active
    lam, V = np.linalg.eigh(-H)
    if lam[0] <= _SINGULAR_RTOL * max(abs(lam[-1]), np.finfo(float).tiny):
        raise SingularCovarianceError("Hessian is singular", V[:, 0])
    B = 1.0 / lam[0]
    step = np.linalg.solve(-H, g)
    eta = float(np.linalg.norm(step))
    d = step / eta if eta > 0 else V[:, 0]
    eps = max(eta, 1e-6)
    dH = (hessian(ctx, theta + eps * d) - hessian(ctx, theta - eps * d)) / n_active
    K_lip = float(np.linalg.norm(dH, 2) / (2.0 * eps))
    return KantorovichDiagnostic(B=float(B), eta=eta, K_lip=K_lip, r=float(B * K_lip * eta))


# ── Curves ──────────────────────────────────────────────────────────────────────

def fit_curve(panel: Panel, spec: ModelSpec, cfg: SolverConfig | None = None) -> CurveFit:
    """Fit every t0 in spec.eval_times; per-t0 errors are collected, not raised.

    With warm starts the sweep is sequential (each fit starts at the previous θ̂);
    without, the t0 grid is fitted on a thread pool.
    """
    cfg = cfg or SolverConfig()
    if not spec.eval_times:
        raise ValueError("ModelSpec.eval_times is empty")

    def _one(t0, init):
        ctx = panel_context(panel, t0, spec.kernel, spec.bandwidth)
        return fit_at(ctx, spec, cfg, init)

    results: list = []
    if cfg.warm_start:
        init = None
        for t0 in spec.eval_times:
            try:
                fit = _one(t0, init)
                init = fit.theta_hat
                results.append(fit)
            except NetcoxError as e:
                results.append(e)
    else:
        def _safe(t0):
            try:
                return _one(t0, None)
            except NetcoxError as e:
                return e
        with ThreadPoolExecutor(max_workers=max_workers()) as pool:
            results = list(pool.map(_safe, spec.eval_times))

    fits, errors = [], {}
    for t0, res in zip(spec.eval_times, results):
        if isinstance(res, Exception):
            logger.warning("fit at t0=%s failed: %s: %s", t0, type(res).__name__, res)
            errors[t0] = f"{type(res).__name__}: {res}"
        else:
            fits.append(res)
    if fits:
        curve = ParameterCurve(np.array([f.t0 for f in fits]), np.vstack([f.theta_hat for f in fits]))
    else:
        curve = ParameterCurve(np.empty(0), np.empty((0, spec.q)))
    return CurveFit(curve, fits, errors)


# ── Serialisation ───────────────────────────────────────────────────────────────

def fits_to_frame(fits) -> pd.DataFrame:
    """Columns t0, theta_1..q, se_1..q, active_size, converged."""
    rows = []
    for f in fits:
        row = {"t0": f.t0}
        row.update({f"theta_{m + 1}": v for m, v in enumerate(f.theta_hat)})
        row.update({f"se_{m + 1}": v for m, v in enumerate(f.std_errors)})
        row["active_size"] = f.active_size
        row["converged"] = bool(f.converged)
        rows.append(row)
    return pd.DataFrame(rows)


def write_fits_csv(fits, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fits_to_frame(fits).to_csv(path, index=False, float_format="%.17g")


def read_fits_csv(path) -> pd.DataFrame:
    return pd.read_csv(path)


def theta_from_frame(frame: pd.DataFrame, t0: float) -> np.ndarray:
    """θ̂ row of a fits table at t0."""
    row = frame[frame["t0"] == t0]
    if row.empty:
        raise KeyError(f"no fitted parameters at t0={t0}")
    cols = sorted((c for c in frame.columns if c.startswith("theta_")), key=lambda c: int(c.split("_")[1]))
    return row.iloc[0][cols].to_numpy(dtype=float)


def fits_to_json(fits, covariate_names=None) -> list:
    return [
        {
            "t0": f.t0,
            "theta": f.theta_hat.tolist(),
            "se": f.std_errors.tolist(),
            "covariance": f.covariance.tolist(),
            "active_size": f.active_size,
            "effective_scale": f.effective_scale,
            "boundary": f.boundary,
            "covariate_names": list(covariate_names) if covariate_names else None,
            "solver": {
                "iterations": f.solver.iterations,
                "grad_norm": f.solver.grad_norm,
                "converged": f.solver.converged,
                "kantorovich_r": f.solver.kantorovich_r,
            },
        }
        for f in fits
    ]


def write_fits_json(fits, path, covariate_names=None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(fits_to_json(fits, covariate_names), indent=2))
