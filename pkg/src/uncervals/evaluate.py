"""Monte Carlo harness: coverage, conditional coverage, goodness of fit and theory checks."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .conformal import (
    BorderScores,
    border_scores,
    fit_uncervals,
    interval_distribution,
    normalize_mode,
)
from .core import ConditionalCdfModel, Dataset, derive_seed, make_split, rng_stream
from .estimators import OracleModel, fit_estimator
from .simgen import SimConfig, simulate

__all__ = [
    "ConditionalCoverageCurve",
    "CoverageReport",
    "GofReport",
    "Method",
    "UnbiasednessReport",
    "VcReport",
    "binned_coverage",
    "compare_conditional_coverage",
    "conditional_coverage_curve",
    "gof_uniformity",
    "kolmogorov_pvalue",
    "ks_uniform_statistic",
    "local_logistic",
    "marginal_coverage",
    "method_bounds",
    "naive_quantile_lpb",
    "unbiasedness_check",
    "vc_shatter_search",
]


# ---------------------------------------------------------------------------
# lower predictive bounds


def naive_quantile_lpb(model: ConditionalCdfModel, X, alpha: float, t_max=None):
    """``inf{t : F1(t, x) >= alpha}``, the plug-in alpha-quantile.

    Returns ``(lpb, plateau)``. Where the CDF never reaches ``alpha`` before
    ``t_max`` the bound is reported as ``t_max`` and flagged in ``plateau``.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    t_max = model.t_max if t_max is None else float(t_max)
    lpb = model.invert_survival(np.full(X.shape[0], 1.0 - alpha), X, t_max)
    plateau = ~np.isfinite(lpb)
    lpb = np.where(plateau, t_max, lpb)
    return lpb, plateau


@dataclass(frozen=True)
class Method:
    """How prediction sets are built in a replication.

    ``kind`` is ``"uncervals"`` or ``"naive"``; ``estimator`` is ``"oracle"``
    or an estimator name (``"weibph"``, ``"turnbull"``, ``"kturnbull"``).
    Both kinds fit the estimator on the same fitting split.
    """

    kind: str = "uncervals"
    mode: str = "estar"
    b: float = 1.0
    estimator: str = "weibph"
    features: str = "identity"
    fit_fraction: float = 0.5

    def __post_init__(self):
        if self.kind not in ("uncervals", "naive"):
            raise ValueError(f"unknown method kind {self.kind!r}")
        object.__setattr__(self, "mode", normalize_mode(self.mode))

    @property
    def label(self) -> str:
        if self.kind == "naive":
            return f"naive[{self.estimator}]"
        return f"uncervals[{self.mode},b={self.b:g},{self.estimator}]"


def _estimator_for(method: Method, config: SimConfig):
    if method.estimator == "oracle":
        return OracleModel.from_config(config)
    if method.estimator == "weibph":
        return lambda d: fit_estimator("weibph", d, features=method.features, std_errors=False)
    return method.estimator


def method_bounds(method: Method, train: Dataset, config: SimConfig, alpha: float, seed: int):
    """Fit ``method`` on ``train``; return a function ``X -> (lo, hi)``."""
    est = _estimator_for(method, config)
    if method.kind == "uncervals":
        fitted = fit_uncervals(train, alpha, method.b, method.mode, method.fit_fraction, seed, est)
        return fitted.bounds
    split = make_split(len(train), method.fit_fraction, derive_seed(seed, "split"))
    part = train.subset(split.fit_indices)
    model = est if isinstance(est, ConditionalCdfModel) else (
        fit_estimator(est, part) if isinstance(est, str) else est(part)
    )
    ends = np.concatenate([part.l, part.u[np.isfinite(part.u)]])
    t_max = 10.0 * float(ends.max())

    def bounds(X):
        lpb, _ = naive_quantile_lpb(model, X, alpha, t_max)
        return lpb, np.full(lpb.shape, np.inf)

    return bounds


# ---------------------------------------------------------------------------
# marginal coverage


@dataclass
class CoverageReport:
    label: str
    alpha: float
    B: int
    n: int
    n_test: int
    coverages: np.ndarray
    seed: int

    @property
    def mean(self) -> float:
        return float(np.mean(self.coverages))

    @property
    def sd(self) -> float:
        return float(np.std(self.coverages, ddof=1)) if self.B > 1 else 0.0

    @property
    def se(self) -> float:
        return self.sd / math.sqrt(self.B)

    def mean_abs_deviation(self, target: float | None = None) -> float:
        target = 1.0 - self.alpha if target is None else target
        return float(np.mean(np.abs(self.coverages - target)))

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "alpha": self.alpha,
            "B": self.B,
            "n": self.n,
            "n_test": self.n_test,
            "seed": self.seed,
            "mean": self.mean,
            "sd": self.sd,
            "se": self.se,
            "mean_abs_deviation": self.mean_abs_deviation(),
            "coverages": self.coverages.tolist(),
        }


def _coverage_rep(args):
    method, config, alpha, n_test, seed, rep = args
    train = simulate(config.replace(seed=derive_seed(seed, "sim", rep)))
    test = simulate(config.replace(n=n_test, seed=derive_seed(seed, "eval", rep)))
    lo, hi = method_bounds(method, train.dataset, config, alpha, derive_seed(seed, "rep", rep))(test.X)
    T = test.true_times
    return float(np.mean((lo <= T) & (T <= hi)))


def _run(fn, tasks, n_jobs):
    if n_jobs is None or n_jobs <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(fn, tasks))


def marginal_coverage(
    method: Method,
    config: SimConfig,
    alpha: float,
    B: int,
    n_test: int = 200,
    seed: int = 0,
    n_jobs: int = 1,
) -> CoverageReport:
    """Fraction of fresh event times inside the prediction set, per replication.

    Replication ``r`` draws its training set, test set and method randomness
    from the ``"sim"``, ``"eval"`` and ``"rep"`` sub-streams of ``seed`` at
    index ``r``, so results do not depend on ``n_jobs``.
    """
    if B < 1:
        raise ValueError("B must be at least 1")
    tasks = [(method, config, alpha, n_test, seed, r) for r in range(B)]
    cov = np.array(_run(_coverage_rep, tasks, n_jobs))
    return CoverageReport(method.label, alpha, B, config.n, n_test, cov, seed)


# ---------------------------------------------------------------------------
# conditional coverage


def silverman_bandwidth(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n, p = x.shape
    sd = x.std(axis=0, ddof=1)
    iqr = np.subtract(*np.percentile(x, [75, 25], axis=0)) / 1.349
    spread = np.where(iqr > 0, np.minimum(sd, iqr), sd)
    if p == 1:
        return 0.9 * spread * n ** (-0.2)
    return spread * (4.0 / ((p + 2) * n)) ** (1.0 / (p + 4))


def local_logistic(x, y, x_eval, bandwidth=None, ridge=1e-6, max_iter=30):
    """Kernel-weighted local-linear logistic regression.

    At each evaluation point a logistic model with intercept and slope(s) in
    ``x - x0`` is fitted by Newton's method with Gaussian kernel weights; the
    fitted intercept gives ``pi(x0)``. ``ridge`` (scaled by the total weight)
    keeps the fit finite when all nearby responses agree.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    x_eval = np.asarray(x_eval, dtype=float)
    if x_eval.ndim == 1:
        x_eval = x_eval[:, None]
    y = np.asarray(y, dtype=float).reshape(-1)
    h = silverman_bandwidth(x) if bandwidth is None else np.broadcast_to(
        np.asarray(bandwidth, dtype=float), (x.shape[1],)
    )
    if np.any(~np.isfinite(h)) or np.any(h <= 0):
        raise ValueError("degenerate smoother bandwidth")
    p = x.shape[1]
    out = np.empty(x_eval.shape[0])
    chunk = max(1, 2_000_000 // max(1, x.shape[0]))
    for start in range(0, x_eval.shape[0], chunk):
        x0 = x_eval[start:start + chunk]
        diff = (x[None, :, :] - x0[:, None, :]) / h
        w = np.exp(-0.5 * np.sum(diff * diff, axis=2))
        D = np.concatenate([np.ones(diff.shape[:2] + (1,)), diff], axis=2)
        wsum = w.sum(axis=1)
        ybar = np.clip((w @ y) / np.where(wsum > 0, wsum, 1.0), 1e-6, 1 - 1e-6)
        theta = np.zeros((x0.shape[0], p + 1))
        theta[:, 0] = np.log(ybar / (1 - ybar))
        lam = ridge * np.maximum(wsum, 1e-12)
        for _ in range(max_iter):
            eta = np.clip(np.einsum("mnk,mk->mn", D, theta), -30, 30)
            mu = 1.0 / (1.0 + np.exp(-eta))
            g = np.einsum("mn,mnk->mk", w * (y[None, :] - mu), D) - lam[:, None] * theta
            Hm = np.einsum("mn,mnk,mnl->mkl", w * mu * (1 - mu), D, D)
            Hm += lam[:, None, None] * np.eye(p + 1)
            step = np.linalg.solve(Hm, g[..., None])[..., 0]
            norm = np.linalg.norm(step, axis=1, keepdims=True)
            step = step * np.minimum(1.0, 5.0 / np.maximum(norm, 1e-300))
            theta += step
            if np.max(norm) < 1e-8:
                break
        out[start:start + chunk] = 1.0 / (1.0 + np.exp(-np.clip(theta[:, 0], -30, 30)))
    return np.clip(out, 0.0, 1.0)


def binned_coverage(x, y, bins: int = 20, x_eval=None):
    """Equal-width-bin success rate (1-d covariate)."""
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    edges = np.linspace(x.min(), x.max(), bins + 1)
    idx = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, bins - 1)
    counts = np.bincount(idx, minlength=bins)
    rates = np.bincount(idx, weights=y, minlength=bins) / np.maximum(counts, 1)
    rates = np.where(counts > 0, rates, np.nan)
    if x_eval is None:
        return edges, rates
    k = np.clip(np.searchsorted(edges, np.asarray(x_eval).reshape(-1), side="right") - 1, 0, bins - 1)
    return rates[k]


@dataclass
class ConditionalCoverageCurve:
    grid: np.ndarray
    pi_grid: np.ndarray
    pi_points: np.ndarray
    err: float
    alpha: float
    n_eval: int
    binned: np.ndarray = field(default_factory=lambda: np.empty(0))

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "n_eval": self.n_eval,
            "err": self.err,
            "grid": self.grid.reshape(len(self.grid), -1).tolist(),
            "pi_grid": self.pi_grid.tolist(),
            "binned": [None if math.isnan(v) else v for v in self.binned.tolist()],
        }


def coverage_err(pi_hat, alpha: float) -> float:
    """Root mean square distance of ``pi_hat`` from ``1 - alpha``."""
    pi_hat = np.asarray(pi_hat, dtype=float)
    return float(np.sqrt(np.mean((pi_hat - (1.0 - alpha)) ** 2)))


def conditional_coverage_curve(
    lpb_fn,
    config: SimConfig,
    alpha: float,
    n_eval: int = 5000,
    seed: int = 0,
    grid_size: int = 200,
    bandwidth=None,
    sim=None,
) -> ConditionalCoverageCurve:
    """Smoothed ``P(T >= L(X) | X)`` and its ``err`` against ``1 - alpha``.

    ``lpb_fn`` maps a covariate matrix to lower bounds. Fresh points come from
    ``config`` (or are passed as ``sim``). For a single covariate the smoother
    is evaluated on a grid and linearly interpolated to the sample points.
    """
    if n_eval < 100:
        raise ValueError("n_eval must be at least 100")
    if sim is None:
        sim = simulate(config.replace(n=n_eval, seed=seed))
    X, T = sim.X, sim.true_times
    lpb = np.asarray(lpb_fn(X), dtype=float)
    y = (T >= lpb).astype(float)
    if X.shape[1] == 1:
        grid = np.linspace(X[:, 0].min(), X[:, 0].max(), grid_size)
        pi_grid = local_logistic(X, y, grid, bandwidth)
        pi_pts = np.interp(X[:, 0], grid, pi_grid)
        binned = binned_coverage(X[:, 0], y)[1]
    else:
        grid = X
        pi_grid = local_logistic(X, y, X, bandwidth)
        pi_pts = pi_grid
        binned = np.empty(0)
    return ConditionalCoverageCurve(grid, pi_grid, pi_pts, coverage_err(pi_pts, alpha), alpha,
                                    n_eval, binned)


def _condcov_rep(args):
    methods, config, alpha, n_eval, seed, rep = args
    train = simulate(config.replace(seed=derive_seed(seed, "sim", rep)))
    fresh = simulate(config.replace(n=n_eval, seed=derive_seed(seed, "eval", rep)))
    errs = []
    for m in methods:
        fn = method_bounds(m, train.dataset, config, alpha, derive_seed(seed, "rep", rep))
        curve = conditional_coverage_curve(lambda X: fn(X)[0], config, alpha, n_eval, sim=fresh)
        errs.append(curve.err)
    return errs


def compare_conditional_coverage(
    methods,
    config: SimConfig,
    alpha: float,
    B: int,
    n_eval: int = 5000,
    seed: int = 0,
    n_jobs: int = 1,
) -> dict[str, np.ndarray]:
    """``err`` per replication for each method, on shared training and evaluation draws."""
    methods = list(methods)
    tasks = [(methods, config, alpha, n_eval, seed, r) for r in range(B)]
    res = np.array(_run(_condcov_rep, tasks, n_jobs)).reshape(B, len(methods))
    return {m.label: res[:, k] for k, m in enumerate(methods)}


# ---------------------------------------------------------------------------
# goodness of fit


def ks_uniform_statistic(u) -> float:
    """``sup_t |ECDF(t) - t|`` for a sample on [0, 1]."""
    u = np.sort(np.asarray(u, dtype=float).reshape(-1))
    n = u.size
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - u), np.max(u - (i - 1) / n)))


def kolmogorov_pvalue(d: float, n: int, terms: int = 100) -> float:
    """Asymptotic ``P(sqrt(n) D_n >= sqrt(n) d)`` from the Kolmogorov series.

    Uses ``2 sum (-1)^(k-1) exp(-2 k^2 x^2)`` for ``x >= 1`` and the
    theta-function form of the CDF below that, each truncated at ``terms``.
    """
    x = math.sqrt(n) * d
    if x <= 0:
        return 1.0
    k = np.arange(1, terms + 1)
    if x >= 1.0:
        p = 2.0 * np.sum((-1.0) ** (k - 1) * np.exp(-2.0 * k * k * x * x))
    else:
        cdf = math.sqrt(2 * math.pi) / x * np.sum(
            np.exp(-((2 * k - 1) ** 2) * math.pi ** 2 / (8 * x * x))
        )
        p = 1.0 - cdf
    return float(min(1.0, max(0.0, p)))


@dataclass
class GofReport:
    n: int
    statistic: float
    p_value: float
    phi_star: np.ndarray
    seed: int

    def ecdf(self):
        x = np.sort(self.phi_star)
        return x, np.arange(1, x.size + 1) / x.size

    def to_dict(self) -> dict:
        return {"n": self.n, "statistic": self.statistic, "p_value": self.p_value, "seed": self.seed}


def gof_uniformity(model: ConditionalCdfModel, data: Dataset, seed=0) -> GofReport:
    """KS test of ``Phi*_i = lam_i + V_i (ups_i - lam_i)`` against Uniform(0, 1).

    Every row is randomized once on its own borders; no resampling.
    """
    if len(data) < 10:
        raise ValueError("need at least 10 observations")
    scores = border_scores(model, data)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(
        np.random.SeedSequence(int(seed))
    )
    phi = np.clip(scores.lam + rng.uniform(size=len(scores)) * (scores.ups - scores.lam), 0, 1)
    d = ks_uniform_statistic(phi)
    return GofReport(len(data), d, kolmogorov_pvalue(d, len(data)), phi,
                     seed if isinstance(seed, int) else -1)


# ---------------------------------------------------------------------------
# theory checks


@dataclass
class UnbiasednessReport:
    grid: np.ndarray
    mean: np.ndarray
    se: np.ndarray
    reps: int
    n: int

    @property
    def z(self) -> np.ndarray:
        return (self.mean - self.grid) / self.se

    @property
    def passed(self) -> bool:
        return bool(np.all(np.abs(self.z) <= 3.0))

    def to_dict(self) -> dict:
        return {
            "grid": self.grid.tolist(),
            "mean": self.mean.tolist(),
            "se": self.se.tolist(),
            "z": self.z.tolist(),
            "reps": self.reps,
            "n": self.n,
            "passed": self.passed,
        }


def unbiasedness_check(config: SimConfig, reps: int = 500, grid=None, seed: int = 0) -> UnbiasednessReport:
    """Monte Carlo mean of the interval distribution under the oracle model.

    With oracle borders and noninformative inspection censoring, the interval
    distribution is unbiased for the CDF of ``F(T, X)``, i.e. for ``t``.
    """
    grid = np.round(np.arange(1, 10) / 10, 10) if grid is None else np.asarray(grid, dtype=float)
    model = OracleModel.from_config(config)
    vals = np.empty((reps, grid.size))
    for r in range(reps):
        sim = simulate(config.replace(seed=derive_seed(seed, "sim", r)))
        vals[r] = interval_distribution(border_scores(model, sim.dataset), grid)
    return UnbiasednessReport(grid, vals.mean(axis=0), vals.std(axis=0, ddof=1) / math.sqrt(reps),
                              reps, config.n)


def _f2(t, l, u):
    return np.where((l <= t) & (t < u), t - l, 0.0)


def count_dichotomies(l, u, c) -> np.ndarray:
    """Exact number of subsets picked out by ``{f_t(l, u) > c}`` as ``t`` ranges over R.

    Arrays have shape ``(trials, k)``. The indicator is piecewise constant
    between the critical values ``l_j``, ``u_j`` and ``l_j + c_j``, so
    evaluating at those values, the midpoints between them and one point
    beyond each end covers every attainable dichotomy.
    """
    l, u, c = (np.atleast_2d(np.asarray(a, dtype=float)) for a in (l, u, c))
    trials, k = l.shape
    crit = np.sort(np.concatenate([l, u, l + c], axis=1), axis=1)
    mids = 0.5 * (crit[:, 1:] + crit[:, :-1])
    ends = np.stack([crit[:, 0] - 1.0, crit[:, -1] + 1.0], axis=1)
    ts = np.concatenate([crit, mids, ends], axis=1)
    inside = _f2(ts[:, :, None], l[:, None, :], u[:, None, :]) > c[:, None, :]
    codes = inside @ (1 << np.arange(k))
    seen = np.zeros((trials, 1 << k), dtype=bool)
    seen[np.arange(trials)[:, None], codes] = True
    return seen.sum(axis=1)


@dataclass
class VcReport:
    n_points: int
    trials: int
    max_dichotomies: int
    shattered: bool
    witness: dict
    seed: int

    def to_dict(self) -> dict:
        return asdict(self)


def vc_shatter_search(budget: int = 100_000, seed: int = 0, n_points: int = 3,
                      chunk: int = 20_000) -> VcReport:
    """Random search for ``n_points`` triples ``(l, u, c)`` shattered by ``{f_t > c}``.

    ``f_t(l, u) = 1{l <= t < u} (t - l)``. Endpoints are uniform on [0, 1]
    (so some intervals are empty) and thresholds uniform on [-0.2, 0.8].
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    rng = rng_stream(seed, "vc")
    best, witness, done = -1, {}, 0
    while done < budget:
        m = min(chunk, budget - done)
        l = rng.uniform(0, 1, (m, n_points))
        u = rng.uniform(0, 1, (m, n_points))
        c = rng.uniform(-0.2, 0.8, (m, n_points))
        counts = count_dichotomies(l, u, c)
        i = int(np.argmax(counts))
        if counts[i] > best:
            best = int(counts[i])
            witness = {"l": l[i].tolist(), "u": u[i].tolist(), "c": c[i].tolist()}
        done += m
    return VcReport(n_points, budget, best, best == 2 ** n_points, witness, seed)
