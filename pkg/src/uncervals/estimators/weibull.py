"""Weibull proportional-hazards models: censored-likelihood MLE and the oracle.

Both share ``S(t | x) = exp(-(s t)^p * exp(eta(x)))``. The fitted model has
``eta = z(x) @ beta`` for a named feature map ``z``; the oracle uses the true
simulation link.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from ..core import ConditionalCdfModel, Dataset, exact_mask
from ..optim import bfgs, numerical_hessian
from ..simgen import Link, SimConfig

__all__ = [
    "FEATURES",
    "OracleModel",
    "WeibullPhError",
    "WeibullPhFit",
    "weibull_ph_fit",
    "weibull_ph_loglik",
]

FEATURES = {
    "identity": lambda X: X,
    "abs": np.abs,
}


class WeibullPhError(ValueError):
    pass


class _WeibullForm(ConditionalCdfModel):
    """Closed-form CDF and inversions given ``scale``, ``shape`` and ``eta(X)``."""

    scale: float
    shape: float

    def eta(self, X) -> np.ndarray:
        raise NotImplementedError

    def _cdf(self, t, X):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore"):
            z = self.shape * np.log(self.scale * t) + self.eta(X)
        return -np.expm1(-np.exp(z))

    def _quantile_time(self, surv, X, t_max):
        # S(t) = surv  <=>  (s t)^p e^eta = -log(surv)
        surv = np.asarray(surv, dtype=float)
        eta = self.eta(X)
        with np.errstate(divide="ignore", invalid="ignore"):
            H = -np.log(np.clip(surv, 0.0, 1.0))
            t = np.exp((np.log(H) - eta) / self.shape) / self.scale
        t = np.where(surv >= 1.0, 0.0, t)
        t = np.where(surv <= 0.0, np.inf, t)
        return np.where(t > t_max, np.inf, t)

    def invert_survival(self, q, X, t_max=None):
        q, X = _align(q, X)
        t_max = self.t_max if t_max is None else float(t_max)
        return self._quantile_time(q, X, t_max)

    def first_cdf_exceed(self, c, X, t_max=None):
        c, X = _align(c, X)
        t_max = self.t_max if t_max is None else float(t_max)
        return self._quantile_time(1.0 - c, X, t_max)

    def density(self, t, X) -> np.ndarray:
        t, X = _align(t, X)
        H = (self.scale * t) ** self.shape * np.exp(self.eta(X))
        return self.shape / t * H * np.exp(-H)


def _align(v, X):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    v = np.atleast_1d(np.asarray(v, dtype=float))
    n = max(v.size, X.shape[0])
    return np.broadcast_to(v, (n,)).copy(), np.broadcast_to(X, (n, X.shape[1]))


def _jf(v):
    v = float(v)
    return v if math.isfinite(v) else ("inf" if v > 0 else "-inf")


@dataclass(eq=False)
class OracleModel(_WeibullForm):
    """The simulation's true conditional distribution."""

    shape: float
    scale: float
    link: Link = field(default_factory=Link)
    t_max: float = math.inf
    name: str = "oracle"

    @classmethod
    def from_config(cls, config: SimConfig, t_max: float = math.inf) -> "OracleModel":
        return cls(config.shape, config.scale, config.link, t_max)

    def eta(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return self.link(X)

    def to_dict(self) -> dict:
        return {
            "model": self.name,
            "shape": self.shape,
            "scale": self.scale,
            "link": self.link.to_dict(),
            "t_max": _jf(self.t_max),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OracleModel":
        return cls(float(d["shape"]), float(d["scale"]), Link.from_dict(d["link"]),
                   float(d.get("t_max", math.inf)))


@dataclass(eq=False)
class WeibullPhFit(_WeibullForm):
    """Fitted Weibull PH model with ``theta = (log s, log p, beta)``."""

    log_scale: float
    log_shape: float
    beta: np.ndarray
    features: str = "identity"
    converged: bool = True
    grad_norm: float = float("nan")
    n_iter: int = 0
    loglik: float = float("nan")
    std_errors: np.ndarray | None = None
    t_max: float = math.inf
    name: str = "weibph"

    @property
    def scale(self) -> float:
        return math.exp(self.log_scale)

    @property
    def shape(self) -> float:
        return math.exp(self.log_shape)

    @property
    def theta(self) -> np.ndarray:
        return np.concatenate([[self.log_scale, self.log_shape], self.beta])

    def eta(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.beta.size == 0:
            return np.zeros(X.shape[0])
        return FEATURES[self.features](X) @ self.beta

    def to_dict(self) -> dict:
        return {
            "model": self.name,
            "log_scale": self.log_scale,
            "log_shape": self.log_shape,
            "beta": self.beta.tolist(),
            "features": self.features,
            "converged": self.converged,
            "grad_norm": self.grad_norm,
            "n_iter": self.n_iter,
            "loglik": self.loglik,
            "std_errors": None if self.std_errors is None else self.std_errors.tolist(),
            "t_max": _jf(self.t_max),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WeibullPhFit":
        se = d.get("std_errors")
        return cls(
            float(d["log_scale"]), float(d["log_shape"]), np.asarray(d["beta"], dtype=float),
            d.get("features", "identity"), bool(d.get("converged", True)),
            float(d.get("grad_norm", float("nan"))), int(d.get("n_iter", 0)),
            float(d.get("loglik", float("nan"))),
            None if se is None else np.asarray(se, dtype=float),
            float(d.get("t_max", math.inf)),
        )


def weibull_ph_loglik(theta, l, u, Z, exact=None):
    """Censored log-likelihood and its gradient in ``theta = (log s, log p, beta)``.

    Interval rows contribute ``log(S(l) - S(u))`` (``S(0) = 1`` covers left
    censoring), right-censored rows ``log S(l)``, exact rows ``log f(t)``.
    """
    theta = np.asarray(theta, dtype=float)
    l = np.asarray(l, dtype=float)
    u = np.asarray(u, dtype=float)
    Z = np.asarray(Z, dtype=float).reshape(l.size, -1)
    if exact is None:
        exact = exact_mask(l, u)
    a, p = theta[0], math.exp(theta[1])
    beta = theta[2:]
    xb = Z @ beta if beta.size else np.zeros(l.size)
    k = theta.size

    def hazard(t, mask):
        # cumulative hazard and d/dtheta for rows in mask with t > 0
        H = np.zeros(l.size)
        dH = np.zeros((l.size, k))
        pos = mask & (t > 0) & np.isfinite(t)
        lt = np.log(t[pos])
        z = p * (a + lt) + xb[pos]
        Hp = np.exp(z)
        H[pos] = Hp
        dH[pos, 0] = Hp * p
        dH[pos, 1] = Hp * p * (a + lt)
        dH[pos, 2:] = Hp[:, None] * Z[pos]
        return H, dH

    right = np.isinf(u) & ~exact
    interval = ~right & ~exact
    Hl, dHl = hazard(l, ~exact)
    Hu, dHu = hazard(u, interval)

    ll = np.zeros(l.size)
    g = np.zeros((l.size, k))

    ll[right] = -Hl[right]
    g[right] = -dHl[right]

    D = Hu[interval] - Hl[interval]
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        ll[interval] = -Hl[interval] + np.log(-np.expm1(-D))
        r = 1.0 / np.expm1(D)
    g[interval] = -dHl[interval] + r[:, None] * (dHu[interval] - dHl[interval])

    if exact.any():
        t = l[exact]
        lt = np.log(t)
        z = p * (a + lt) + xb[exact]
        H = np.exp(z)
        ll[exact] = theta[1] - lt + z - H
        g[exact, 0] = p * (1 - H)
        g[exact, 1] = 1 + p * (a + lt) * (1 - H)
        g[exact, 2:] = Z[exact] * (1 - H)[:, None]

    return math.fsum(ll), g.sum(axis=0)


def _initial_theta(data: Dataset, k: int) -> np.ndarray:
    l, u = data.l, data.u
    rep = np.where(np.isfinite(u), 0.5 * (l + u), 1.5 * l)
    rep = rep[rep > 0]
    med = float(np.median(rep)) if rep.size else 1.0
    return np.concatenate([[-math.log(med), 0.0], np.zeros(k)])


def weibull_ph_fit(
    data: Dataset,
    init=None,
    tol: float = 1e-6,
    max_iter: int = 500,
    features: str = "identity",
    std_errors: bool = True,
) -> WeibullPhFit:
    """Maximum-likelihood Weibull PH fit by BFGS on the log-parameter scale.

    ``tol`` bounds the Euclidean norm of the log-likelihood gradient. On
    non-convergence the fit is restarted once from a perturbed start; if that
    also fails, the returned model has ``converged=False`` and a warning is
    issued.
    """
    if features not in FEATURES:
        raise WeibullPhError(f"unknown feature map {features!r}; choose from {sorted(FEATURES)}")
    if len(data) == 0:
        raise WeibullPhError("empty dataset")
    if np.all(np.isinf(data.u) & ~data.exact):
        raise WeibullPhError("need at least one row that is not right-censored")
    Z = FEATURES[features](data.X) if data.covariate_dim else np.empty((len(data), 0))
    l, u, ex = data.l, data.u, data.exact

    def objective(theta):
        ll, g = weibull_ph_loglik(theta, l, u, Z, ex)
        return -ll, -g

    theta0 = _initial_theta(data, Z.shape[1]) if init is None else np.asarray(init, dtype=float)
    f0, _ = objective(theta0)
    if not np.isfinite(f0):
        raise WeibullPhError("log-likelihood is not finite at the initial parameters")

    res = bfgs(objective, theta0, gtol=tol, max_iter=max_iter)
    if not res.converged:
        rng = np.random.default_rng(0)
        start = res.x + 0.1 * rng.standard_normal(res.x.size)
        if not np.isfinite(objective(start)[0]):
            start = theta0 + 0.1 * rng.standard_normal(theta0.size)
        retry = bfgs(objective, start, gtol=tol, max_iter=max_iter)
        if retry.converged or retry.fun < res.fun:
            res = retry
    if not res.converged:
        warnings.warn(
            f"Weibull PH fit did not converge (gradient norm {res.grad_norm:.3g})",
            RuntimeWarning,
            stacklevel=2,
        )

    se = None
    if std_errors:
        info = -numerical_hessian(lambda th: -objective(th)[1], res.x)
        try:
            cov = np.linalg.inv(info)
            se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
        except np.linalg.LinAlgError:
            se = np.full(res.x.size, np.nan)

    finite = np.concatenate([l, u[np.isfinite(u)]])
    top = float(finite.max()) if finite.size else 0.0
    return WeibullPhFit(
        float(res.x[0]), float(res.x[1]), res.x[2:].copy(), features, res.converged,
        res.grad_norm, res.n_iter, -res.fun, se, 10.0 * top if top > 0 else 1.0,
    )
