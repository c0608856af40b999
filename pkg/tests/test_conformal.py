import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uncervals.conformal import (
    BorderScores,
    CalibrationResult,
    border_scores,
    bootstrap_phi,
    calibrate,
    conformal_quantile,
    fit_uncervals,
    interval_distribution,
    normalize_mode,
    prediction_bounds,
    prediction_set,
    psi,
    quantile_rank,
    uncervals,
)
from uncervals.core import Dataset
from uncervals.estimators import OracleModel
from uncervals.simgen import Link, preset, simulate


def test_psi():
    assert psi([0.2, 1.0], 1.0).tolist() == pytest.approx([0.8, 0.0])
    assert psi(0.25, 0.5) == pytest.approx(0.25)


def test_modes():
    assert normalize_mode("*") == "estar" and normalize_mode("0") == "e0"
    with pytest.raises(ValueError):
        normalize_mode("e1")


class TestQuantile:
    def test_rank_for_n_99(self):
        assert quantile_rank(99, 0.1) == 90

    def test_order_statistic(self):
        v = np.arange(99, 0, -1) / 100.0
        assert conformal_quantile(v, 0.1) == pytest.approx(0.90)

    def test_saturation(self):
        assert conformal_quantile([0.1, 0.2, 0.3, 0.4, 0.5], 0.1) == math.inf

    def test_ties_take_kth_sorted(self):
        assert conformal_quantile([0.5] * 20, 0.2) == 0.5

    def test_alpha_range(self):
        with pytest.raises(ValueError):
            conformal_quantile([0.1], 1.0)


class TestIntervalDistribution:
    scores = BorderScores([0.2, 0.5, 0.0], [0.6, 0.5, 1.0])

    def test_hand_example(self):
        assert interval_distribution(self.scores, 0.5) == pytest.approx(0.75)

    def test_full_and_empty(self):
        assert interval_distribution(self.scores, 1.0) == 1.0
        assert interval_distribution(BorderScores([0.1, 0.3], [0.2, 0.9]), 0.0) == 0.0

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.floats(0, 1), min_size=1, max_size=30), st.lists(st.floats(0, 1), min_size=50, max_size=50))
    def test_collapse_equals_ecdf(self, points, grid):
        p = np.array(points)
        g = np.array(grid)
        got = interval_distribution(BorderScores(p, p), g)
        assert np.array_equal(got, np.mean(p[None, :] <= g[:, None], axis=1))

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=1, max_size=30))
    def test_monotone_and_normalized(self, pairs):
        a = np.array(pairs)
        s = BorderScores(a.min(axis=1), a.max(axis=1))
        g = np.linspace(-0.1, 1, 111)
        I = interval_distribution(s, g)
        assert np.all(np.diff(I) >= -1e-12)
        assert I[0] == 0.0 and interval_distribution(s, 1.0) == 1.0

    def test_bootstrap_converges_to_interval_distribution(self):
        rng = np.random.default_rng(1)
        lam = rng.uniform(0, 0.7, 40)
        s = BorderScores(lam, lam + rng.uniform(0, 0.3, 40))
        phi = bootstrap_phi(s, "estar", seed=3, size=100_000)
        g = np.linspace(0, 1, 101)
        ecdf = np.searchsorted(np.sort(phi), g, side="right") / phi.size
        assert np.max(np.abs(ecdf - interval_distribution(s, g))) < 0.01


class TestBootstrap:
    s = BorderScores([0.1, 0.4, 0.7], [0.3, 0.4, 1.0])

    def test_e0_uses_left_borders(self):
        phi = bootstrap_phi(self.s, "e0", seed=1, size=500)
        assert set(np.unique(phi)) <= {0.1, 0.4, 0.7}

    def test_estar_within_drawn_interval(self):
        phi = bootstrap_phi(self.s, "estar", seed=1, size=2000)
        assert np.all((phi >= 0.1) & (phi <= 1.0))
        assert np.any((phi > 0.1) & (phi < 0.3))

    def test_deterministic(self):
        assert np.array_equal(bootstrap_phi(self.s, "estar", 5), bootstrap_phi(self.s, "estar", 5))

    def test_invalid_scores(self):
        with pytest.raises(ValueError):
            BorderScores([0.5], [0.4])


def test_border_scores_right_censored_upper_is_one():
    m = OracleModel(2.0, 1.0, Link("zero"))
    d = Dataset([0.0, 1.0], [1.0, math.inf], [[0.0], [0.0]])
    s = border_scores(m, d)
    assert s.lam.tolist() == pytest.approx([0.0, 1 - math.exp(-1)])
    assert s.ups.tolist() == pytest.approx([1 - math.exp(-1), 1.0])


class TestBounds:
    oracle = OracleModel(2.0, 1.0, Link("zero"), t_max=100.0)

    def test_lpb_at_survival_level(self):
        lo, hi = prediction_bounds(self.oracle, [[0.0]], math.exp(-1))
        assert lo[0] == pytest.approx(1.0) and hi[0] == math.inf

    def test_two_sided_region(self):
        lo, hi = prediction_bounds(self.oracle, [[0.0]], 0.25, b=0.5)
        # F(lo) = 0.25 and F(hi) = 0.75
        assert 1 - math.exp(-lo[0] ** 2) == pytest.approx(0.25)
        assert 1 - math.exp(-hi[0] ** 2) == pytest.approx(0.75)

    def test_saturated_quantile_is_full_support(self):
        lo, hi = prediction_bounds(self.oracle, [[0.0], [1.0]], math.inf)
        assert lo.tolist() == [0.0, 0.0] and hi.tolist() == [math.inf, math.inf]

    def test_prediction_set_membership(self):
        ps = prediction_set(self.oracle, [[0.0]], math.exp(-1), alpha=0.1)[0]
        assert ps.lpb == pytest.approx(1.0)
        assert 1.5 in ps and 0.5 not in ps and ps.lo in ps


def test_calibration_round_trip():
    sim = simulate(preset("condcov", seed=2))
    m = OracleModel.from_config(preset("condcov"))
    res = calibrate(m, sim.dataset, 0.1, mode="estar", seed=4)
    back = CalibrationResult.from_dict(res.to_dict())
    assert back.q_hat == res.q_hat and np.array_equal(back.v_star, res.v_star)
    assert res.n == len(sim.dataset)


def test_lpb_monotone_in_alpha():
    data = simulate(preset("condcov", seed=6)).dataset
    X = np.linspace(-2, 2, 21)[:, None]
    prev = None
    for alpha in (0.05, 0.1, 0.2, 0.3, 0.5):
        lo, _ = fit_uncervals(data, alpha, seed=1).bounds(X)
        if prev is not None:
            assert np.all(lo >= prev - 1e-12)
        prev = lo


def test_e0_is_more_conservative_than_estar():
    data = simulate(preset("condcov", seed=8)).dataset
    q0 = fit_uncervals(data, 0.1, mode="e0", seed=2).calibration.q_hat
    qs = fit_uncervals(data, 0.1, mode="estar", seed=2).calibration.q_hat
    assert q0 >= qs


def test_end_to_end_deterministic_and_estimators():
    data = simulate(preset("condcov", n=300, seed=1)).dataset
    x = [[-1.0], [0.0], [1.0]]
    for est in ("weibph", "turnbull", OracleModel.from_config(preset("condcov"))):
        a = uncervals(data, 0.1, estimator=est, x_new=x, seed=3)
        b = uncervals(data, 0.1, estimator=est, x_new=x, seed=3)
        assert a == b
        assert all(0 <= s.lo < math.inf and s.hi == math.inf for s in a)


def test_small_calibration_saturates():
    data = simulate(preset("condcov", n=12, seed=1)).dataset
    fit = fit_uncervals(data, 0.05, estimator="turnbull", seed=0)
    assert fit.calibration.saturated
    lo, hi = fit.bounds([[0.0]])
    assert lo[0] == 0.0 and hi[0] == math.inf
