"""Tests for one-sided CV fits, the CV criterion and bandwidth selection."""
import math
import warnings

import numpy as np
import pytest

from engine.bandwidth import (
    OneSidedFit,
    cv_error,
    cv_transfer_factor,
    one_sided_local_constant_fit,
    one_sided_local_linear_fit,
    pearson_error,
    select_bandwidth,
    transfer_bandwidth,
)
from engine.errors import InsufficientHistoryError
from engine.estimator import fit_curve
from engine.kernels import kernel_eval, kernel_from_name, one_sided
from engine.model import ModelSpec, ParameterCurve
from engine.simulation import SimDesign, design_panel, simulate_panel_counts

TRI = kernel_from_name("triangular")
TRI_ONE = one_sided(TRI)


@pytest.fixture
def cv_panel():
    d = SimDesign(n_nodes=8, n_cells=12, true_curve=ParameterCurve.constant([0.5, 0.3]),
                  covariates=("intercept", "bernoulli:0.5"), cell_length=1.0, seed=13)
    return simulate_panel_counts(design_panel(d), d.true_curve, d.seed)


class TestTransfer:

    def test_factor_for_triangular_target(self):
        assert cv_transfer_factor(TRI) == pytest.approx(1 / 1.82, abs=0.01)

    def test_rounding_modes(self):
        f = cv_transfer_factor(TRI)
        assert transfer_bandwidth(23, f, "nearest") == 13
        assert transfer_bandwidth(23, f, "floor") == 12
        assert transfer_bandwidth(1, 0.1) == 1
        with pytest.raises(ValueError):
            transfer_bandwidth(23, f, "ceil")


def test_pearson_error():
    assert pearson_error([1.0, 2.0], [0.0, 2.0]) == pytest.approx(0.5)


class TestOneSidedFits:

    def test_unit_bandwidth_sees_no_past(self, cv_panel):
        with pytest.raises(InsufficientHistoryError):
            one_sided_local_constant_fit(cv_panel, 5, TRI_ONE, 1)

    def test_local_linear_needs_two_past_cells(self, cv_panel):
        with pytest.raises(InsufficientHistoryError):
            one_sided_local_linear_fit(cv_panel, 1, TRI_ONE, 4)
        fit = one_sided_local_linear_fit(cv_panel, 2, TRI_ONE, 4)
        assert fit.mu1.shape == (2,)

    def test_predictions_ignore_the_scored_cell_and_later(self, cv_panel):
        before = one_sided_local_linear_fit(cv_panel, 6, TRI_ONE, 5)
        counts = cv_panel.records["count"].to_numpy().copy()
        counts[cv_panel.records["cell"].to_numpy() >= 6] += 7
        after = one_sided_local_linear_fit(cv_panel.with_counts(counts), 6, TRI_ONE, 5)
        np.testing.assert_array_equal(before.predicted, after.predicted)
        assert not np.array_equal(before.observed, after.observed)


def test_local_constant_cv_matches_straight_loop(make_panel):
    rng = np.random.default_rng(2)
    counts = rng.poisson(1.3, size=(8, 6))
    panel = make_panel(counts)
    h, cells = 3, list(range(1, 8))

    errs = []
    for k in cells:
        W = E = 0.0
        for c in range(k):
            w = kernel_eval(TRI_ONE, (c - k) / h)
            W += w * counts[c].sum()
            E += w * counts.shape[1]
        pred = W / E
        errs.append(sum((pred - n) ** 2 / pred for n in counts[k]) / counts.shape[1])
    expected = sum(errs) / len(errs)

    score = cv_error(panel, TRI_ONE, h, cells=cells, local_linear=False)
    assert score.cells_scored == 7 and score.cells_skipped == 0
    assert score.err == pytest.approx(expected, rel=1e-9)


class TestSelect:

    def test_single_candidate(self, cv_panel):
        res = select_bandwidth(cv_panel, TRI, [5])
        assert res.h_l == 5
        assert res.h_k == round(5 * res.factor)
        assert [s.h for s in res.scores] == [5]

    def test_argmin_over_candidates(self, cv_panel):
        res = select_bandwidth(cv_panel, TRI, [3, 5, 8], rounding="floor")
        best = min(res.scores, key=lambda s: (s.err, s.h))
        assert res.h_l == best.h
        assert res.h_k == max(1, math.floor(best.h * res.factor))
        out = res.to_dict()
        assert {"errors", "h_l", "factor", "h_k", "rounding", "failed"} <= set(out)

    @pytest.mark.parametrize("candidates", [[], [2.5], [0]])
    def test_invalid_candidates(self, cv_panel, candidates):
        with pytest.raises(ValueError):
            select_bandwidth(cv_panel, TRI, candidates)

    def test_unscorable_candidate_is_reported(self, cv_panel):
        res = select_bandwidth(cv_panel, TRI, [1, 4])
        assert 1 in res.failed
        assert res.h_l == 4


class TestWindowEdges:

    def test_two_cell_bandwidth_holds_one_past_cell(self, cv_panel):
        with pytest.raises(InsufficientHistoryError, match="1 past cell"):
            one_sided_local_linear_fit(cv_panel, 5, TRI_ONE, 2)
        one_sided_local_constant_fit(cv_panel, 5, TRI_ONE, 2)
        assert one_sided_local_linear_fit(cv_panel, 5, TRI_ONE, 3).mu1.shape == (2,)

    def test_underflowing_prediction_is_infinite_without_warning(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            assert pearson_error([0.0, 1.0], [1.0, 1.0]) == math.inf

    def test_underflowing_cell_is_skipped(self, monkeypatch, make_panel):
        def fake_fit(panel, cell, kernel, bandwidth, box=None, cfg=None, init=None):
            predicted = np.array([0.0, 1.0]) if cell == 3 else np.array([1.0, 1.0])
            return OneSidedFit(cell, np.zeros(1), None, predicted, np.array([1.0, 1.0]), None)

        monkeypatch.setattr("engine.bandwidth.one_sided_local_linear_fit", fake_fit)
        score = cv_error(make_panel(np.ones((6, 6), dtype=int)), TRI_ONE, 3, cells=range(1, 6))
        assert score.cells_scored == 4 and score.cells_skipped == 1
        assert score.err == 0.0


def _trend_panel(n_nodes, n_cells, curve, seed):
    d = SimDesign(n_nodes=n_nodes, n_cells=n_cells, true_curve=curve, cell_length=1.0, seed=seed)
    return simulate_panel_counts(design_panel(d), curve, seed)


@pytest.mark.slow
def test_local_linear_removes_trend_bias():
    # θ0 rises linearly; a past-only average lags behind it, the local-linear intercept does not
    curve = ParameterCurve([0.0, 30.0], [[-1.0], [0.8]])
    k, h = 25, 10
    truth = float(np.ravel(curve.at(k))[0])
    linear, constant = [], []
    for r in range(40):
        panel = _trend_panel(30, 30, curve, seed=100 + r)
        linear.append(one_sided_local_linear_fit(panel, k, TRI_ONE, h).mu0[0])
        constant.append(one_sided_local_constant_fit(panel, k, TRI_ONE, h).mu0[0])
    linear, constant = np.array(linear), np.array(constant)
    mc_se = linear.std(ddof=1) / math.sqrt(linear.size)
    assert abs(linear.mean() - truth) < 3 * mc_se
    assert constant.mean() < truth - 0.1


@pytest.mark.slow
def test_selected_bandwidth_tracks_oracle():
    t = np.arange(41.0)
    curve = ParameterCurve(t, (-0.5 + 0.8 * np.sin(2 * np.pi * t / 20.0))[:, None])
    interior = tuple(range(10, 30))
    truth = np.ravel(curve.at(np.array(interior)))
    hits = 0
    for r in range(50):
        panel = _trend_panel(20, 40, curve, seed=500 + r)
        mse = {}
        for h in range(2, 17):
            result = fit_curve(panel, ModelSpec(TRI, float(h), 1, eval_times=interior))
            if result.errors:
                continue
            est = np.array([f.theta_hat[0] for f in result.fits])
            mse[h] = float(np.mean((est - truth) ** 2))
        h_star = min(mse, key=mse.get)
        selected = select_bandwidth(panel, TRI, range(4, 31, 2), cells=range(8, 40)).h_k
        hits += h_star / 2 <= selected <= 2 * h_star
    assert hits >= 40
