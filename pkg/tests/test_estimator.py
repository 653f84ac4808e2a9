"""Tests for the damped Newton fit, plug-in covariance, bands and curve sweeps."""
import math
import warnings
from dataclasses import replace

import numpy as np
import pytest

from engine.errors import ConvergenceWarning, SingularCovarianceError, UnboundedMLEError
from engine.estimator import (
    SolverConfig,
    asymptotic_covariance,
    confidence_band,
    fit_at,
    fit_curve,
    kantorovich_check,
    maximize,
    read_fits_csv,
    recession_direction,
    theta_from_frame,
    write_fits_csv,
    z_multiplier,
)
from engine.kernels import kernel_eval, kernel_from_name
from engine.likelihood import panel_context
from engine.model import ModelSpec

TRI = kernel_from_name("triangular")
COUNTS = np.array([
    [1, 0, 2, 0, 1, 0],
    [0, 1, 1, 0, 0, 2],
    [3, 0, 0, 1, 1, 0],
    [0, 0, 1, 2, 0, 1],
    [1, 1, 0, 0, 0, 0],
])


def _spec(q=1, h=2.0, box=None, eval_times=()):
    return ModelSpec(TRI, h, q, box, eval_times)


def _totals(counts, t0, h):
    w = np.array([kernel_eval(TRI, (k - t0) / h) for k in range(counts.shape[0])])
    return float(w @ counts.sum(axis=1)), float(w.sum() * counts.shape[1])


class TestInterceptModel:

    def test_closed_form_maximiser(self, make_panel):
        ctx = panel_context(make_panel(COUNTS), 2, TRI, 2.0)
        fit = fit_at(ctx, _spec())
        W, E = _totals(COUNTS, 2, 2.0)
        assert fit.converged
        assert fit.theta_hat[0] == pytest.approx(math.log(W / E), abs=1e-9)

    def test_variance_is_l2_over_weighted_events(self, make_panel):
        # Var = ∫K² / (|L| h Σ̂) with Σ̂ = E e^θ̂ / (|L| h) = W / (|L| h)
        ctx = panel_context(make_panel(COUNTS), 2, TRI, 2.0)
        fit = fit_at(ctx, _spec())
        W, _ = _totals(COUNTS, 2, 2.0)
        assert fit.covariance[0, 0] == pytest.approx((2 / 3) / W, rel=1e-8)

    def test_covariance_shrinks_with_bandwidth(self, make_panel):
        panel = make_panel(COUNTS)
        narrow = panel_context(panel, 2, TRI, 2.0)
        wide = panel_context(panel, 2, TRI, 3.0)
        theta = np.array([0.0])
        assert asymptotic_covariance(wide, theta, _spec(h=3.0))[0, 0] < \
            asymptotic_covariance(narrow, theta, _spec())[0, 0]

    def test_no_events_is_unbounded_downwards(self, make_panel):
        ctx = panel_context(make_panel(np.zeros((5, 6), dtype=int)), 2, TRI, 2.0)
        with pytest.raises(UnboundedMLEError) as err:
            fit_at(ctx, _spec())
        assert err.value.direction[0] < 0

    def test_maximiser_outside_box(self, make_panel):
        ctx = panel_context(make_panel(COUNTS * 20), 2, TRI, 2.0)
        with pytest.raises(UnboundedMLEError) as err:
            fit_at(ctx, _spec(box=(-1.0, 1.0)))
        assert err.value.direction[0] > 0

    def test_iteration_cap_warns(self, make_panel):
        ctx = panel_context(make_panel(COUNTS), 2, TRI, 2.0)
        with pytest.warns(ConvergenceWarning):
            theta, diag, _ = maximize(ctx, _spec().theta_box, SolverConfig(max_iter=1), init=[3.0])
        assert not diag.converged
        assert diag.iterations == 1

    def test_kantorovich_one_dimensional_formula(self, make_panel):
        ctx = panel_context(make_panel(COUNTS), 2, TRI, 2.0)
        W, E = _totals(COUNTS, 2, 2.0)
        theta = math.log(W / E) + 0.3
        eta = abs(W / (E * math.exp(theta)) - 1.0)
        eps = max(eta, 1e-6)
        diag = kantorovich_check(ctx, np.array([theta]))
        assert diag.eta == pytest.approx(eta, rel=1e-9)
        assert diag.r == pytest.approx((math.exp(eps) - math.exp(-eps)) / (2 * eps) * eta, rel=1e-6)

    def test_converged_fit_is_certified(self, make_panel):
        fit = fit_at(panel_context(make_panel(COUNTS), 2, TRI, 2.0), _spec())
        assert fit.solver.kantorovich_r is not None
        assert fit.solver.kantorovich_r <= 0.5


def test_duplicate_covariate_is_singular(make_panel):
    X = np.ones((5, 6, 2))
    ctx = panel_context(make_panel(COUNTS, X), 2, TRI, 2.0)
    with pytest.raises(SingularCovarianceError):
        fit_at(ctx, _spec(q=2))


def test_weight_scale_leaves_fit_unchanged(random_panel):
    base = fit_at(panel_context(random_panel, 4, TRI, 3.0), _spec(q=2, h=3.0))
    for c in (0.1, 10.0):
        k = kernel_from_name("triangular", scale=c)
        spec = ModelSpec(k, 3.0, 2)
        fit = fit_at(panel_context(random_panel, 4, k, 3.0), spec)
        np.testing.assert_allclose(fit.theta_hat, base.theta_hat, atol=1e-8)
        np.testing.assert_allclose(fit.covariance, base.covariance, rtol=1e-6)


def test_relabelled_panel_gives_identical_fit(random_panel):
    perm = {1: 4, 2: 6, 3: 1, 4: 5, 5: 2, 6: 3}
    a = fit_at(panel_context(random_panel, 4, TRI, 3.0), _spec(q=2, h=3.0))
    b = fit_at(panel_context(random_panel.relabel(perm), 4, TRI, 3.0), _spec(q=2, h=3.0))
    np.testing.assert_array_equal(a.theta_hat, b.theta_hat)


def test_z_multiplier():
    assert z_multiplier(0.99) == pytest.approx(2.5758, abs=1e-4)
    assert z_multiplier(0.95) == pytest.approx(1.9600, abs=1e-4)
    with pytest.raises(ValueError):
        z_multiplier(1.0)


def test_band_is_symmetric(make_panel):
    fit = fit_at(panel_context(make_panel(COUNTS), 2, TRI, 2.0), _spec())
    lo, hi = confidence_band(fit, 0.99)
    np.testing.assert_allclose(hi - fit.theta_hat, fit.theta_hat - lo)
    np.testing.assert_allclose(hi - lo, 2 * 2.5758293 * fit.std_errors, rtol=1e-6)


class TestCurve:

    def test_warm_and_cold_starts_agree(self, random_panel):
        spec = _spec(q=2, h=3.0, eval_times=range(9))
        warm = fit_curve(random_panel, spec, SolverConfig(warm_start=True))
        cold = fit_curve(random_panel, spec, SolverConfig(warm_start=False))
        assert [f.t0 for f in warm.fits] == [f.t0 for f in cold.fits]
        np.testing.assert_allclose(warm.curve.values, cold.curve.values, atol=1e-7)

    def test_failures_are_collected(self, make_panel):
        counts = COUNTS.copy()
        counts[1] = 0
        spec = _spec(h=1.0, eval_times=(0, 1, 2))
        with warnings.catch_warnings():
            warnings.simplefilter("error", ConvergenceWarning)
            result = fit_curve(make_panel(counts), spec)
        assert [f.t0 for f in result.fits] == [0.0, 2.0]
        assert result.errors[1].startswith("UnboundedMLEError")

    def test_fits_csv_keeps_full_precision(self, tmp_path, random_panel):
        result = fit_curve(random_panel, _spec(q=2, h=3.0, eval_times=(3, 4)))
        write_fits_csv(result.fits, tmp_path / "fits.csv")
        frame = read_fits_csv(tmp_path / "fits.csv")
        np.testing.assert_array_equal(theta_from_frame(frame, 4), result.fits[1].theta_hat)
        with pytest.raises(KeyError):
            theta_from_frame(frame, 7)


class TestExistence:

    def test_level_without_events_is_unbounded(self, make_panel):
        # events only on x = 0 rows: ℓ keeps rising as θ_x → −∞
        rng = np.random.default_rng(11)
        x = np.tile(np.arange(15) % 2, (9, 1)).astype(float)
        counts = rng.poisson(2.0, (9, 15)) * (x == 0)
        X = np.stack([np.ones_like(x), x], axis=-1)
        ctx = panel_context(make_panel(counts, X, n_nodes=6), 4, TRI, 3.0)
        with pytest.raises(UnboundedMLEError) as err:
            fit_at(ctx, _spec(q=2, h=3.0))
        np.testing.assert_allclose(err.value.direction, [0.0, -1.0], atol=1e-6)

    def test_overlapping_levels_have_no_recession_direction(self, random_panel):
        assert recession_direction(panel_context(random_panel, 4, TRI, 3.0)) is None

    def test_signed_kernel_is_not_checked(self, random_panel):
        L = kernel_from_name("triangular", one_sided=True, local_linear_equivalent=True)
        assert recession_direction(panel_context(random_panel, 8, L, 3.0)) is None


class TestCovarianceScale:

    def test_scale_comes_from_the_context(self, random_panel):
        theta = np.array([-0.2, 0.5])
        k3 = kernel_from_name("triangular", scale=3.0)
        unit = asymptotic_covariance(panel_context(random_panel, 4, TRI, 3.0), theta, _spec(q=2, h=3.0))
        scaled = asymptotic_covariance(panel_context(random_panel, 4, k3, 3.0), theta, _spec(q=2, h=3.0))
        np.testing.assert_allclose(scaled, unit, rtol=1e-10)

    def test_mismatched_kernel_shape_rejected(self, random_panel):
        ctx = panel_context(random_panel, 4, TRI, 3.0)
        spec = ModelSpec(kernel_from_name("epanechnikov"), 3.0, 2)
        with pytest.raises(ValueError):
            asymptotic_covariance(ctx, np.zeros(2), spec)


@pytest.mark.parametrize("c", [0.5, 2.0, 10.0])
def test_rescaled_covariate_rescales_estimate(random_panel, c):
    base = fit_at(panel_context(random_panel, 4, TRI, 3.0), _spec(q=2, h=3.0))
    rec = random_panel.records.copy()
    rec["x_2"] = rec["x_2"] * c
    scaled_panel = replace(random_panel, records=rec)
    fit = fit_at(panel_context(scaled_panel, 4, TRI, 3.0), _spec(q=2, h=3.0))
    assert fit.theta_hat[0] == pytest.approx(base.theta_hat[0], abs=1e-7)
    assert fit.theta_hat[1] == pytest.approx(base.theta_hat[1] / c, rel=1e-6, abs=1e-9)
    np.testing.assert_allclose(fit.std_errors, base.std_errors / np.array([1.0, c]), rtol=1e-6)
