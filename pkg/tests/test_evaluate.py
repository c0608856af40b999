import math

import numpy as np
import pytest
from scipy import special, stats

from uncervals.core import Dataset
from uncervals.estimators import OracleModel, turnbull_fit
from uncervals.evaluate import (
    Method,
    binned_coverage,
    conditional_coverage_curve,
    count_dichotomies,
    coverage_err,
    gof_uniformity,
    kolmogorov_pvalue,
    ks_uniform_statistic,
    local_logistic,
    marginal_coverage,
    naive_quantile_lpb,
    unbiasedness_check,
    vc_shatter_search,
)
from uncervals.simgen import Link, preset, simulate


class TestNaive:
    def test_oracle_closed_form(self):
        m = OracleModel(2.0, 1.0, Link("zero"))
        lpb, plateau = naive_quantile_lpb(m, [[0.0]], 1 - math.exp(-1), t_max=100.0)
        assert lpb[0] == pytest.approx(1.0) and not plateau[0]

    def test_small_alpha_tends_to_zero(self):
        m = OracleModel(2.0, 1.0, Link("zero"))
        lpb, _ = naive_quantile_lpb(m, [[0.0]], 1e-10, t_max=100.0)
        assert lpb[0] < 1e-4

    def test_turnbull_plateau_flagged(self):
        # mass 0.5 escapes to the right-censored tail, so F never reaches 0.8
        fit = turnbull_fit(Dataset([0.0, 0.0, 5.0, 5.0], [1.0, 1.0, math.inf, math.inf]))
        lpb, plateau = naive_quantile_lpb(fit, np.empty((1, 0)), 0.8, t_max=50.0)
        assert plateau[0] and lpb[0] == 50.0

    def test_alpha_range(self):
        with pytest.raises(ValueError):
            naive_quantile_lpb(OracleModel(2.0, 1.0), [[0.0]], 0.0)


class TestMarginalCoverage:
    cfg = preset("condcov", n=200)

    def test_reproducible(self):
        m = Method("uncervals", "estar", estimator="oracle")
        a = marginal_coverage(m, self.cfg, 0.1, 3, 100, seed=4)
        b = marginal_coverage(m, self.cfg, 0.1, 3, 100, seed=4)
        assert np.array_equal(a.coverages, b.coverages)
        assert np.all((a.coverages >= 0) & (a.coverages <= 1))
        assert a.to_dict()["B"] == 3

    def test_monotone_in_alpha(self):
        m = Method("uncervals", "estar", estimator="weibph")
        lo = marginal_coverage(m, self.cfg, 0.5, 3, 200, seed=9)
        hi = marginal_coverage(m, self.cfg, 0.05, 3, 200, seed=9)
        assert np.all(hi.coverages >= lo.coverages)

    def test_naive_and_thread_independence(self):
        m = Method("naive", estimator="weibph")
        a = marginal_coverage(m, self.cfg, 0.2, 2, 100, seed=1, n_jobs=1)
        b = marginal_coverage(m, self.cfg, 0.2, 2, 100, seed=1, n_jobs=2)
        assert np.array_equal(a.coverages, b.coverages)

    def test_needs_a_replication(self):
        with pytest.raises(ValueError):
            marginal_coverage(Method(), self.cfg, 0.1, 0)


class TestConditionalCoverage:
    def test_constant_coverage_toy(self):
        rng = np.random.default_rng(3)
        cfg = preset("condcov", n=5000)

        def lpb_fn(X):
            return np.where(rng.uniform(size=X.shape[0]) < 0.9, 0.0, np.inf)

        curve = conditional_coverage_curve(lpb_fn, cfg, 0.1, 5000, seed=1)
        assert curve.err < 0.03
        assert np.all((curve.pi_grid >= 0) & (curve.pi_grid <= 1))

    def test_recovers_logistic_curve(self):
        rng = np.random.default_rng(5)
        x = rng.uniform(-2, 2, 4000)
        p = 1 / (1 + np.exp(-(0.5 + 1.5 * x)))
        y = (rng.uniform(size=x.size) < p).astype(float)
        grid = np.linspace(-1.5, 1.5, 7)
        est = local_logistic(x, y, grid)
        assert np.max(np.abs(est - 1 / (1 + np.exp(-(0.5 + 1.5 * grid))))) < 0.06
        binned = binned_coverage(x, y, 20, grid)
        assert np.max(np.abs(binned - est)) < 0.1

    def test_all_successes_stay_in_range(self):
        x = np.linspace(0, 1, 300)
        est = local_logistic(x, np.ones(300), np.linspace(0, 1, 5))
        assert np.all((est > 0.99) & (est <= 1.0))

    def test_degenerate_bandwidth(self):
        with pytest.raises(ValueError):
            local_logistic(np.zeros(50), np.ones(50), [0.0])

    def test_err_permutation_invariant(self):
        rng = np.random.default_rng(0)
        pi = rng.uniform(size=100)
        assert coverage_err(pi, 0.1) == pytest.approx(coverage_err(rng.permutation(pi), 0.1))
        assert coverage_err(np.full(10, 0.9), 0.1) == pytest.approx(0.0)

    def test_min_eval(self):
        with pytest.raises(ValueError):
            conditional_coverage_curve(lambda X: np.zeros(len(X)), preset("condcov"), 0.1, 50)


class TestKs:
    def test_statistic_brute_force_and_scipy(self):
        u = np.random.default_rng(2).uniform(size=57) ** 1.3
        d = ks_uniform_statistic(u)
        s = np.sort(u)
        brute = max(max(abs((i + 1) / u.size - s[i]), abs(i / u.size - s[i])) for i in range(u.size))
        assert d == pytest.approx(brute)
        assert d == pytest.approx(stats.kstest(u, "uniform").statistic)

    @pytest.mark.parametrize("x", [0.1, 0.3, 0.5, 0.8, 1.0, 1.36, 2.0, 3.0])
    def test_pvalue_series(self, x):
        n = 400
        assert kolmogorov_pvalue(x / math.sqrt(n), n) == pytest.approx(special.kolmogorov(x), abs=1e-10)

    def test_point_mass_is_maximal(self):
        assert ks_uniform_statistic(np.zeros(100)) == 1.0
        assert ks_uniform_statistic(np.full(100, 0.5)) == pytest.approx(0.5)


class TestGof:
    cfg = preset("condcov", n=2000, seed=4)

    def test_deterministic_and_uniform_under_oracle(self):
        data = simulate(self.cfg).dataset
        m = OracleModel.from_config(self.cfg)
        a = gof_uniformity(m, data, seed=1)
        b = gof_uniformity(m, data, seed=1)
        assert a.statistic == b.statistic and 0 <= a.statistic <= 1
        assert a.p_value > 0.01
        x, y = a.ecdf()
        assert y[-1] == 1.0 and np.all(np.diff(x) >= 0)

    def test_wrong_shape_rejected(self):
        data = simulate(self.cfg.replace(n=5000)).dataset
        bad = OracleModel(1.0, 1.0, self.cfg.link)
        assert gof_uniformity(bad, data, seed=1).p_value < 0.05

    def test_needs_ten_rows(self):
        with pytest.raises(ValueError):
            gof_uniformity(OracleModel(2.0, 1.0), Dataset([0.0] * 5, [1.0] * 5, [[0.0]] * 5))


class TestVc:
    def test_two_points_shattered(self):
        assert vc_shatter_search(20_000, seed=1, n_points=2).max_dichotomies == 4

    def test_three_points_not_shattered_small_budget(self):
        rep = vc_shatter_search(20_000, seed=2)
        assert rep.max_dichotomies <= 7 and not rep.shattered
        assert len(rep.witness["l"]) == 3

    def test_counter_on_known_configuration(self):
        # disjoint intervals with thresholds below their lengths: each point
        # can be picked out alone, plus the empty set
        l = np.array([[0.0, 2.0]])
        u = np.array([[1.0, 3.0]])
        c = np.array([[0.5, 0.5]])
        assert count_dichotomies(l, u, c)[0] == 3

    def test_negative_threshold_point_always_included(self):
        rng = np.random.default_rng(0)
        l = rng.uniform(0, 1, (2000, 3))
        u = l + rng.uniform(0, 1, (2000, 3))
        c = rng.uniform(0, 0.5, (2000, 3))
        c[:, 0] = -0.1
        assert np.all(count_dichotomies(l, u, c) <= 4)


def test_unbiasedness_small():
    rep = unbiasedness_check(preset("condcov", n=200), reps=60, seed=3)
    assert rep.grid.size == 9
    assert np.all(np.abs(rep.z) < 4)
