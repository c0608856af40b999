import math

import numpy as np
import pytest
from scipy import stats

from uncervals.simgen import Link, SimConfig, draw_true_times, inspect_censor, preset, simulate


def test_containment():
    sim = simulate(preset("condcov", n=3000, seed=2))
    d, T = sim.dataset, sim.true_times
    assert np.all(d.l < T) and np.all(T <= d.u)
    assert np.all(d.l[sim.left_censored] == 0)
    assert np.all(np.isinf(d.u[sim.right_censored]))


def test_deterministic_given_seed():
    a = simulate(preset("condcov", seed=9))
    b = simulate(preset("condcov", seed=9))
    assert a.dataset == b.dataset
    assert np.array_equal(a.true_times, b.true_times)


@pytest.mark.parametrize("x, coef", [(0.0, -0.3), (1.5, -0.3), (-2.0, 0.7)])
def test_marginal_law_at_fixed_x(x, coef):
    cfg = SimConfig(shape=2.0, scale=1.3, link=Link("abs", (coef,)))
    rng = np.random.default_rng(4)
    T = draw_true_times(cfg, np.full((100_000, 1), x), rng)
    r = coef * abs(x)
    cdf = lambda t: 1 - np.exp(-((1.3 * t) ** 2) * math.exp(r))
    assert stats.kstest(T, cdf).statistic < 0.01


def test_gumbel_inverse_transform():
    # T at V = 1 - e^{-1} is exactly 1/s when r = 0
    cfg = SimConfig(shape=3.0, scale=2.0, n_covariates=0)
    V = 1 - math.exp(-1)
    H = math.log(-math.log(1 - V))
    assert draw_true_times(cfg, np.empty((1, 0)), gumbel=[H])[0] == pytest.approx(0.5)


def test_epoch_ties_go_to_the_window_ending_there():
    cfg = SimConfig(n_covariates=0)
    epochs = np.array([[0.5, 1.0, 1.5]] * 4)
    d = inspect_censor([0.2, 1.0, 1.2, 2.0], cfg, epochs=epochs)
    assert d.l.tolist() == [0.0, 0.5, 1.0, 1.5]
    assert d.u.tolist() == [0.5, 1.0, 1.5, math.inf]


def test_inspection_gaps_bounded_by_length():
    cfg = preset("condcov", n=2000, seed=1)
    d = simulate(cfg).dataset
    fin = np.isfinite(d.u)
    assert np.all(d.u[fin] - d.l[fin] <= cfg.inspect_length + 1e-12)
    # last epoch is at most k * L
    assert np.all(d.l <= cfg.inspections * cfg.inspect_length)


def test_covariate_range_and_copula():
    cfg = preset("linear_ph", n=20000, n_covariates=2, link=Link("linear", (0.1, 0.1)), rho=0.6)
    X = simulate(cfg).X
    assert X.min() >= 0 and X.max() <= 1
    assert np.corrcoef(X.T)[0, 1] > 0.4


def test_cfs_preset_censoring_rate():
    rc = simulate(preset("cfs", seed=3)).right_censored.mean()
    assert 0.25 < rc < 0.35


@pytest.mark.parametrize("name", ["condcov", "cfs", "linear_ph", "nonlinear_ph", "no_covariates", "oracle"])
def test_presets_simulate(name):
    sim = simulate(preset(name, n=50))
    assert len(sim.dataset) == 50
    assert sim.X.shape[1] == preset(name).n_covariates


def test_config_round_trip_and_validation():
    cfg = preset("condcov")
    assert SimConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ValueError):
        SimConfig(shape=0)
    with pytest.raises(ValueError):
        SimConfig(rho=1.0)
    with pytest.raises(ValueError):
        Link("cubic")
    with pytest.raises(KeyError):
        preset("nope")
