"""Tests for designs, stream and panel simulation, and the Monte Carlo study."""
import math

import numpy as np
import pytest
from scipy import stats

from engine.kernels import kernel_from_name
from engine.model import ModelSpec, ParameterCurve, bin_events
from engine.simulation import (
    SimDesign,
    child_seed,
    configuration_model_p,
    design_panel,
    mc_normality_study,
    pair_universe,
    simulate_panel_counts,
    simulate_stream,
)


def _design(**kw):
    base = dict(n_nodes=10, n_cells=6, true_curve=ParameterCurve.constant([0.0, 0.4]),
                covariates=("intercept", "bernoulli:0.5"), cell_length=1.0, seed=7)
    base.update(kw)
    return SimDesign(**base)


def test_pair_universe_sizes():
    i, j = pair_universe(5)
    assert i.size == 10 and np.all(i < j)
    assert pair_universe(5, directed=True)[0].size == 20


def test_configuration_model_probability_is_capped():
    assert configuration_model_p(3, 60) == pytest.approx(0.05)
    assert configuration_model_p(100, 60) == 1.0


def test_child_seeds_are_distinct_and_stable():
    seeds = [child_seed(1, r) for r in range(50)]
    assert len(set(seeds)) == 50
    assert child_seed(1, 3) == seeds[3]


class TestDesign:

    def test_rule_count_must_match_theta(self):
        with pytest.raises(ValueError):
            _design(covariates=("intercept",))

    def test_replay_needs_a_panel(self):
        with pytest.raises(ValueError):
            _design(censor="replay")

    def test_panel_is_deterministic(self):
        a, b = design_panel(_design()), design_panel(_design())
        np.testing.assert_array_equal(a.X, b.X)
        assert a.records["count"].sum() == 0
        np.testing.assert_allclose(a.cell_times, np.arange(6) + 0.5)

    def test_bernoulli_selectors_are_frozen_per_pair(self):
        panel = design_panel(_design(n_nodes=30, censor="bernoulli", censor_p=0.3))
        per_pair = panel.records.groupby(["i", "j"]).size()
        assert (per_pair == 6).all()
        assert 0.2 < len(per_pair) / 435 < 0.4

    def test_stationarity(self):
        assert _design().is_stationary
        curve = ParameterCurve([0.0, 5.0], [[0.0, 0.4], [1.0, 0.4]])
        assert not _design(true_curve=curve).is_stationary


class TestStream:

    def test_same_seed_same_stream(self):
        a, b = simulate_stream(_design()), simulate_stream(_design())
        np.testing.assert_array_equal(a.times, b.times)
        np.testing.assert_array_equal(a.i, b.i)
        assert not np.array_equal(simulate_stream(_design(seed=8)).times, a.times)

    def test_fully_censored_design_has_no_events(self):
        s = simulate_stream(_design(censor="none"))
        assert len(s) == 0
        assert s.horizon == 6.0

    def test_event_count_matches_poisson_mean(self):
        d = SimDesign(n_nodes=30, n_cells=10, true_curve=ParameterCurve.constant([math.log(2.0)]),
                      cell_length=1.0, seed=3)
        n = len(simulate_stream(d, "direct"))
        mean = 435 * 10 * 2.0
        assert abs(n - mean) < 5 * math.sqrt(mean)

    def test_thinning_follows_time_varying_intensity(self):
        # log-rate rises linearly from 0 to log 3 over 10 cells
        curve = ParameterCurve([0.0, 10.0], [[0.0], [math.log(3.0)]])
        d = SimDesign(n_nodes=30, n_cells=10, true_curve=curve, cell_length=1.0, seed=5)
        s = simulate_stream(d)
        mean = 435 * 10 * 2.0 / math.log(3.0)
        assert abs(len(s) - mean) < 5 * math.sqrt(mean)
        cdf = lambda t: (3.0 ** (np.asarray(t) / 10.0) - 1.0) / 2.0
        assert stats.kstest(s.times, cdf).pvalue > 1e-3

    def test_direct_rejects_time_varying_curve(self):
        curve = ParameterCurve([0.0, 10.0], [[0.0], [1.0]])
        d = SimDesign(n_nodes=4, n_cells=10, true_curve=curve, cell_length=1.0)
        with pytest.raises(ValueError):
            simulate_stream(d, "direct")


class TestPanelCounts:

    def test_censored_rows_stay_zero_and_mean_matches(self, make_panel):
        censor = np.ones((40, 6), dtype=int)
        censor[:, 0] = 0
        censor[0, 0] = 1
        panel = make_panel(np.zeros((40, 6), dtype=int), censor=censor, exposure=2.0)
        sim = simulate_panel_counts(panel, [math.log(1.5)], seed=1)
        rec = sim.records
        assert rec.loc[rec["censor"] == 0, "count"].sum() == 0
        unc = rec[rec["censor"] == 1]
        assert abs(unc["count"].mean() - 3.0) < 5 * math.sqrt(3.0 / len(unc))

    def test_only_requested_cells_are_drawn(self, make_panel):
        panel = make_panel(np.zeros((4, 6), dtype=int))
        sim = simulate_panel_counts(panel, [1.0], seed=2, cells=[2])
        per_cell = sim.records.groupby("cell")["count"].sum()
        assert per_cell[2] > 0
        assert per_cell.drop(2).sum() == 0

    def test_cell_draws_do_not_depend_on_other_cells(self, make_panel):
        panel = make_panel(np.zeros((4, 6), dtype=int))
        full = simulate_panel_counts(panel, [0.5], seed=9)
        one = simulate_panel_counts(panel, [0.5], seed=9, cells=[3])
        np.testing.assert_array_equal(full.cell_frame(3)["count"], one.cell_frame(3)["count"])


def test_study_report_shape():
    d = _design(n_nodes=20, n_cells=9)
    spec = ModelSpec(kernel_from_name("triangular"), 4.0, 2)
    report = mc_normality_study(d, spec, n_reps=12)
    out = report.to_dict()
    assert out["n_reps"] == 12 and out["t0"] == 4.0
    assert [c["coordinate"] for c in out["coordinates"]] == [1, 2]
    assert {"coverage_90", "coverage_95", "coverage_99", "mean_z", "var_z", "ad_stat", "rmse"} <= set(
        out["coordinates"][0])


def test_study_rejects_non_stationary_design():
    curve = ParameterCurve([0.0, 5.0], [[0.0, 0.4], [1.0, 0.4]])
    with pytest.raises(ValueError):
        mc_normality_study(_design(true_curve=curve), ModelSpec(kernel_from_name("triangular"), 3.0, 2), n_reps=2)


def test_thinning_and_direct_agree_for_constant_theta():
    base = dict(n_nodes=30, n_cells=8, cell_length=1.0, true_curve=ParameterCurve.constant([0.0, 0.4]),
                covariates=("intercept", "bernoulli:0.5"))
    direct = simulate_stream(SimDesign(**base, seed=5), "direct")
    thinned = simulate_stream(SimDesign(**base, seed=6), "thinning")
    assert stats.ks_2samp(direct.times, thinned.times).pvalue > 1e-3
    mean = 435 * 8 * 0.5 * (1.0 + math.exp(0.4))
    for s in (direct, thinned):
        assert abs(len(s) - mean) < 5 * math.sqrt(mean)


def test_binned_stream_matches_panel_counts():
    # both draw Poisson(exp(θᵀX)) per uncensored (cell, pair); compare totals per covariate level
    totals = {"stream": np.zeros(2), "panel": np.zeros(2), "mean": np.zeros(2)}
    theta = np.array([-0.5, 0.6])
    for seed in range(10):
        d = SimDesign(n_nodes=20, n_cells=4, cell_length=1.0, true_curve=ParameterCurve.constant(theta),
                      covariates=("intercept", "bernoulli:0.4"), censor="bernoulli", censor_p=0.5, seed=seed)
        panel = design_panel(d)
        keys = panel.records[["cell", "i", "j", "x_2"]]
        binned = bin_events(simulate_stream(d, "direct"), d.cell_length)
        assert len(binned.merge(keys, on=["cell", "i", "j"])) == len(binned)
        joined = keys.merge(binned, on=["cell", "i", "j"], how="left").fillna({"count": 0})
        drawn = simulate_panel_counts(panel, theta, seed=seed).records
        for level in (0, 1):
            totals["stream"][level] += joined.loc[joined["x_2"] == level, "count"].sum()
            totals["panel"][level] += drawn.loc[drawn["x_2"] == level, "count"].sum()
            totals["mean"][level] += (keys["x_2"] == level).sum() * math.exp(theta[0] + level * theta[1])
    assert np.all(np.abs(totals["stream"] - totals["panel"]) < 5 * np.sqrt(2 * totals["mean"]))
    assert np.all(np.abs(totals["stream"] - totals["mean"]) < 5 * np.sqrt(totals["mean"]))


@pytest.mark.slow
def test_rmse_falls_with_network_size():
    spec = ModelSpec(kernel_from_name("triangular"), 4.0, 2)
    rmse = {}
    for n in (60, 240):
        d = _design(n_nodes=n, n_cells=9, seed=31)
        report = mc_normality_study(d, spec, n_reps=60, t0=4)
        assert report.n_excluded == 0
        rmse[n] = np.array([c["rmse"] for c in report.coordinates])
    assert np.all(rmse[240] / rmse[60] <= 0.75)
