import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uncervals.core import Dataset
from uncervals.estimators import (
    KernelTurnbullModel,
    OracleModel,
    TurnbullFit,
    WeibullPhError,
    WeibullPhFit,
    fit_estimator,
    maximal_intersections,
    model_from_dict,
    turnbull_em,
    turnbull_fit,
    weibull_ph_fit,
    weibull_ph_loglik,
)
from uncervals.simgen import Link, SimConfig, preset, simulate


# --------------------------------------------------------------------- turnbull


def test_maximal_intersections_hand_example():
    # (0,2], (1,3], (2,4], (3,inf): supports (1,2], (2,3] and (3,4]
    left, right, closed, A = maximal_intersections([0, 1, 2, 3], [2, 3, 4, np.inf])
    assert left.tolist() == [1, 2, 3] and right.tolist() == [2, 3, 4]
    assert not closed.any()
    assert A.tolist() == [[1, 0, 0], [1, 1, 0], [0, 1, 1], [0, 0, 1]]


def test_exact_point_is_closed_support():
    left, right, closed, A = maximal_intersections([0, 1], [2, 1])
    assert left.tolist() == [1] and right.tolist() == [1] and closed.tolist() == [True]


def test_npmle_matches_brute_force_grid():
    l = np.array([0.0, 1.0, 2.0, 0.5, 2.5, 1.5])
    u = np.array([2.0, 3.0, 4.0, 1.2, np.inf, 2.2])
    _, _, _, A = maximal_intersections(l, u)
    J = A.shape[1]
    m, *_ = turnbull_em(A, tol=1e-12, max_iter=100_000)
    g = np.linspace(0, 1, 101)
    W = np.array(list(itertools.product(g, repeat=J - 1)))
    W = W[W.sum(axis=1) <= 1]
    P = np.column_stack([W, 1 - W.sum(axis=1)])
    with np.errstate(divide="ignore"):
        best = np.max(np.sum(np.log(P @ A.T), axis=1))
    em_ll = np.sum(np.log(A @ m))
    assert em_ll >= best - 1e-9
    assert em_ll - best < 5e-3


@st.composite
def interval_data(draw):
    n = draw(st.integers(2, 25))
    a = np.array(draw(st.lists(st.integers(0, 12), min_size=n, max_size=n)), dtype=float)
    w = np.array(draw(st.lists(st.integers(0, 6), min_size=n, max_size=n)), dtype=float)
    u = np.where(w == 6, np.inf, a + w)
    if not np.isfinite(u).any():
        u[0] = a[0] + 1
    return a, u


@settings(max_examples=80, deadline=None)
@given(interval_data())
def test_em_loglik_nondecreasing(data):
    l, u = data
    fit = turnbull_fit(Dataset(l, u), tol=1e-10, max_iter=3000)
    h = np.array(fit.loglik_history)
    assert np.all(np.diff(h) >= -1e-10 * np.maximum(1, np.abs(h[1:])))
    F = fit.cdf(np.linspace(0, 20, 50), np.empty((50, 0)))
    assert np.all(np.diff(F) >= 0) and F[0] >= 0 and F[-1] <= 1


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(1, 30), min_size=1, max_size=40))
def test_exact_data_gives_ecdf(values):
    t = np.array(values, dtype=float) / 4
    fit = turnbull_fit(Dataset(t, t))
    grid = np.unique(np.concatenate([t, t + 0.1, t - 0.1, [0.0]]))
    ecdf = np.mean(t[None, :] <= grid[:, None], axis=1)
    F = fit.cdf(grid, np.empty((grid.size, 0)))
    assert np.max(np.abs(F - ecdf)) < 1e-12


def test_turnbull_inversions_and_plateau():
    t = np.array([1.0, 2.0, 3.0, 4.0])
    fit = turnbull_fit(Dataset(t, t))
    X = np.empty((1, 0))
    assert fit.invert_survival(0.5, X)[0] == 2.0      # F(2) = 0.5
    assert fit.first_cdf_exceed(0.5, X)[0] == 3.0     # strictly above
    assert fit.invert_survival(1.0, X)[0] == 0.0
    assert fit.invert_survival(0.0, X, t_max=3.5)[0] == math.inf


def test_turnbull_serialization():
    sim = simulate(preset("condcov", n=200, seed=3))
    fit = turnbull_fit(sim.dataset)
    back = model_from_dict(fit.to_dict())
    assert isinstance(back, TurnbullFit)
    tt = np.linspace(0, 3, 30)
    X = np.zeros((30, 1))
    assert np.array_equal(back.cdf(tt, X), fit.cdf(tt, X))


def test_turnbull_needs_a_finite_interval():
    with pytest.raises(ValueError):
        turnbull_fit(Dataset([1.0, 2.0], [np.inf, np.inf]))


def test_kernel_turnbull_tracks_covariate_effect():
    cfg = preset("cfs", n=600, seed=4)  # hazard grows with x
    model = KernelTurnbullModel(simulate(cfg).dataset)
    F = model.cdf(np.full(2, 0.6), np.array([[0.2], [1.8]]))
    assert F[1] > F[0] + 0.2
    grid = np.linspace(0, 2, 40)
    Fg = model.cdf(grid, np.full((40, 1), 1.0))
    assert np.all(np.diff(Fg) >= -1e-12)
    back = model_from_dict(model.to_dict())
    assert np.allclose(back.cdf(grid, np.full((40, 1), 1.0)), Fg)


# ---------------------------------------------------------------------- weibull


def test_oracle_closed_forms():
    m = OracleModel(2.0, 1.0, Link("zero"))
    X = np.zeros((1, 1))
    assert m.cdf(1.0, X)[0] == pytest.approx(1 - math.exp(-1))
    assert OracleModel(1.0, 2.0, Link("zero")).cdf(1.0, X)[0] == pytest.approx(1 - math.exp(-2))
    assert m.invert_survival(math.exp(-1), X)[0] == pytest.approx(1.0)
    assert m.first_cdf_exceed(1 - math.exp(-4), X)[0] == pytest.approx(2.0)


def test_oracle_agrees_with_generic_bisection():
    m = OracleModel(2.0, 1.0, Link("abs", (-0.3,)), t_max=50.0)
    X = np.linspace(-2, 2, 9)[:, None]
    q = np.linspace(0.05, 0.95, 9)
    generic = super(type(m), m).invert_survival(q, X)
    assert np.allclose(m.invert_survival(q, X), generic, atol=1e-8)


def _loglik_data(seed=0):
    sim = simulate(preset("condcov", n=300, seed=seed))
    d = sim.dataset
    l, u = d.l.copy(), d.u.copy()
    # a few exactly observed rows
    l[:10] = u[:10] = np.where(np.isfinite(u[:10]), u[:10], l[:10] + 0.3)
    return l, u, d.X


def test_gradient_matches_central_differences():
    l, u, X = _loglik_data()
    rng = np.random.default_rng(7)
    h = 1e-6
    for _ in range(20):
        theta = np.array([rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 1.0), rng.uniform(-1, 1)])
        _, g = weibull_ph_loglik(theta, l, u, X)
        fd = np.empty_like(theta)
        for k in range(theta.size):
            e = np.zeros_like(theta)
            e[k] = h
            fd[k] = (weibull_ph_loglik(theta + e, l, u, X)[0] - weibull_ph_loglik(theta - e, l, u, X)[0]) / (2 * h)
        assert np.all(np.abs(g - fd) <= 1e-5 * np.maximum(1.0, np.abs(fd)))


def test_loglik_right_and_left_censored_terms():
    theta = np.array([0.0, math.log(2.0)])
    Z = np.empty((2, 0))
    ll, _ = weibull_ph_loglik(theta, np.array([0.0, 1.0]), np.array([1.0, np.inf]), Z)
    # log F(1) + log S(1) with S(1) = e^{-1}
    assert ll == pytest.approx(math.log(1 - math.exp(-1)) - 1.0)


def test_weibull_recovers_linear_truth():
    cfg = SimConfig(n=4000, covariate_low=0, covariate_high=2, link=Link("linear", (0.8,)), seed=5)
    fit = weibull_ph_fit(simulate(cfg).dataset)
    assert fit.converged
    truth = np.array([0.0, math.log(2.0), 0.8])
    assert np.all(np.abs(fit.theta - truth) <= 3 * fit.std_errors)


def test_weibull_errors():
    with pytest.raises(WeibullPhError):
        weibull_ph_fit(Dataset([1.0, 2.0], [np.inf, np.inf], [[0.0], [1.0]]))
    with pytest.raises(WeibullPhError):
        weibull_ph_fit(Dataset([0.0], [1.0], [[0.0]]), features="square")


def test_weibull_serialization():
    fit = fit_estimator("weibph", simulate(preset("condcov", n=200)).dataset)
    back = model_from_dict(fit.to_dict())
    assert isinstance(back, WeibullPhFit)
    assert np.array_equal(back.theta, fit.theta)
    oracle = OracleModel.from_config(preset("condcov"))
    assert model_from_dict(oracle.to_dict()).cdf(0.7, [[1.0]]) == oracle.cdf(0.7, [[1.0]])


def test_unknown_estimator():
    with pytest.raises(ValueError):
        fit_estimator("icrf", Dataset([0.0], [1.0]))
