"""Turnbull's self-consistency NPMLE for interval-censored times.

Observations are half-open windows ``(l, u]``; exact rows (``l == u``) are the
closed point ``[t, t]``. Mass lives on the maximal intersections. Inside a
maximal intersection the NPMLE is not identified, so the CDF places each
support's mass at its right endpoint, which keeps it right-continuous.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..core import ConditionalCdfModel, Dataset, exact_mask

__all__ = [
    "KernelTurnbullModel",
    "TurnbullError",
    "TurnbullFit",
    "maximal_intersections",
    "turnbull_em",
    "turnbull_fit",
    "kernel_turnbull_fit",
]

# at equal values: exact-left (closed) < right (closed) < regular-left (open)
_L_EXACT, _RIGHT, _L_OPEN = 0, 1, 2


class TurnbullError(ValueError):
    pass


def _event_ranks(l, u):
    """Dense ranks of left/right endpoint events in the sweep order."""
    n = l.size
    ex = exact_mask(l, u)
    vals = np.concatenate([l, u])
    types = np.concatenate([np.where(ex, _L_EXACT, _L_OPEN), np.full(n, _RIGHT)])
    order = np.lexsort((types, vals))
    sv, st = vals[order], types[order]
    new = np.ones(sv.size, dtype=bool)
    new[1:] = (sv[1:] != sv[:-1]) | (st[1:] != st[:-1])
    dense = np.cumsum(new) - 1
    ranks = np.empty(2 * n, dtype=int)
    ranks[order] = dense
    return ranks[:n], ranks[n:], order, sv, st


def maximal_intersections(l, u):
    """Support sets of the NPMLE.

    Returns
    -------
    left, right : ndarray
        Endpoints of each maximal intersection, sorted.
    closed : ndarray of bool
        True for point supports ``[t, t]`` coming from exact observations.
    A : ndarray, shape (n, J)
        Indicator that support ``j`` lies inside observation ``i``.
    """
    l = np.asarray(l, dtype=float)
    u = np.asarray(u, dtype=float)
    rl, ru, order, sv, st = _event_ranks(l, u)
    is_left = st != _RIGHT
    starts = np.flatnonzero(is_left[:-1] & ~is_left[1:])
    if starts.size == 0:
        raise TurnbullError("no maximal intersection")
    all_ranks = np.concatenate([rl, ru])[order]
    q_rank, p_rank = all_ranks[starts], all_ranks[starts + 1]
    left, right = sv[starts], sv[starts + 1]
    closed = st[starts] == _L_EXACT
    A = (rl[:, None] <= q_rank[None, :]) & (p_rank[None, :] <= ru[:, None])
    return left, right, closed, A.astype(float)


def turnbull_em(A, weights=None, tol=1e-8, max_iter=10_000, init=None):
    """Self-consistency iterations for the support masses.

    Returns ``(masses, iterations, converged, loglik_history)`` where the
    history holds the (weighted) log-likelihood of every iterate, the starting
    point included.
    """
    n, J = A.shape
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    wsum = w.sum()
    if not wsum > 0:
        raise TurnbullError("weights must have positive total")
    m = np.full(J, 1.0 / J) if init is None else np.asarray(init, dtype=float).copy()
    m /= m.sum()
    active = w > 0
    A, w = A[active], w[active]
    denom = A @ m
    history = [float(w @ np.log(denom))]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        m_new = m * (A.T @ (w / denom)) / wsum
        m_new /= m_new.sum()
        delta = np.max(np.abs(m_new - m))
        m = m_new
        denom = A @ m
        history.append(float(w @ np.log(denom)))
        if delta < tol:
            converged = True
            break
    return m, it, converged, history


class _StepCdf:
    """Shared step-function arithmetic for masses placed at right endpoints."""

    support_right: np.ndarray

    def _cum(self, masses):
        cum = np.cumsum(masses)
        return cum / cum[-1]

    def _step_cdf(self, t, masses):
        cum = self._cum(masses)
        k = np.searchsorted(self.support_right, t, side="right")
        return np.where(k > 0, cum[np.maximum(k - 1, 0)], 0.0)

    def _step_first(self, masses, level, strict, t_max):
        """First t >= 0 with F(t) > level (strict) or F(t) >= level."""
        cum = self._cum(masses)
        level = np.asarray(level, dtype=float)
        side = "right" if strict else "left"
        k = np.searchsorted(cum, level, side=side)
        out = np.full(level.shape, np.inf)
        ok = k < cum.size
        out[ok] = np.maximum(self.support_right[k[ok]], 0.0)
        out[out > t_max] = np.inf
        f0 = self._step_cdf(0.0, masses)
        out[(f0 > level) if strict else (f0 >= level)] = 0.0
        return out


@dataclass(eq=False)
class TurnbullFit(_StepCdf, ConditionalCdfModel):
    """Covariate-free NPMLE; ``cdf`` ignores ``x``."""

    support_left: np.ndarray
    support_right: np.ndarray
    closed: np.ndarray
    masses: np.ndarray
    iterations: int
    tol: float
    converged: bool = True
    loglik_history: list = field(default_factory=list)
    t_max: float = math.inf
    name: str = "turnbull"

    @property
    def loglik(self) -> float:
        return self.loglik_history[-1] if self.loglik_history else float("nan")

    def _cdf(self, t, X):
        return self._step_cdf(t, self.masses)

    def invert_survival(self, q, X, t_max=None):
        q = np.atleast_1d(np.asarray(q, dtype=float))
        X = np.atleast_2d(np.asarray(X, dtype=float))
        n = max(q.size, X.shape[0])
        q = np.broadcast_to(q, (n,))
        t_max = self.t_max if t_max is None else float(t_max)
        # S(t) <= q  <=>  F(t) >= 1 - q
        return self._step_first(self.masses, 1.0 - q, strict=False, t_max=t_max)

    def first_cdf_exceed(self, c, X, t_max=None):
        c = np.atleast_1d(np.asarray(c, dtype=float))
        X = np.atleast_2d(np.asarray(X, dtype=float))
        n = max(c.size, X.shape[0])
        c = np.broadcast_to(c, (n,))
        t_max = self.t_max if t_max is None else float(t_max)
        return self._step_first(self.masses, c, strict=True, t_max=t_max)

    def to_dict(self) -> dict:
        return {
            "model": self.name,
            "support_left": self.support_left.tolist(),
            "support_right": [_jf(v) for v in self.support_right],
            "closed": self.closed.tolist(),
            "masses": self.masses.tolist(),
            "iterations": self.iterations,
            "tol": self.tol,
            "converged": self.converged,
            "loglik": self.loglik,
            "t_max": _jf(self.t_max),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TurnbullFit":
        return cls(
            np.asarray(d["support_left"], dtype=float),
            np.asarray([float(v) for v in d["support_right"]]),
            np.asarray(d["closed"], dtype=bool),
            np.asarray(d["masses"], dtype=float),
            int(d["iterations"]),
            float(d["tol"]),
            bool(d.get("converged", True)),
            [float(d["loglik"])] if "loglik" in d else [],
            float(d.get("t_max", math.inf)),
        )


def _jf(v):
    v = float(v)
    return v if math.isfinite(v) else ("inf" if v > 0 else "-inf")


def _default_t_max(data: Dataset) -> float:
    ends = np.concatenate([data.l, data.u[np.isfinite(data.u)]])
    top = float(ends.max()) if ends.size else 0.0
    return 10.0 * top if top > 0 else 1.0


def turnbull_fit(data: Dataset, tol: float = 1e-7, max_iter: int = 20_000) -> TurnbullFit:
    """Marginal NPMLE of the event-time CDF from ``data`` (covariates ignored)."""
    if not np.any(np.isfinite(data.u)):
        raise TurnbullError("need at least one finite interval")
    left, right, closed, A = maximal_intersections(data.l, data.u)
    m, it, conv, hist = turnbull_em(A, tol=tol, max_iter=max_iter)
    return TurnbullFit(left, right, closed, m, it, tol, conv, hist, _default_t_max(data))


class KernelTurnbullModel(_StepCdf, ConditionalCdfModel):
    """Turnbull NPMLE localized in ``x`` by Gaussian-kernel weights.

    At a covariate value ``x0`` each training interval gets weight
    ``prod_k phi((x0_k - x_ik) / h_k)``; the weighted self-consistency
    equations are solved on the supports of the pooled data, warm-started from
    the marginal fit. Bandwidths default to Silverman's rule per coordinate.
    """

    name = "kturnbull"

    def __init__(self, data: Dataset, bandwidth=None, tol=1e-6, max_iter=2000):
        if not np.any(np.isfinite(data.u)):
            raise TurnbullError("need at least one finite interval")
        self.l = np.asarray(data.l)
        self.u = np.asarray(data.u)
        self.X = np.asarray(data.X)
        self.support_left, self.support_right, self.closed, self._A = maximal_intersections(
            data.l, data.u
        )
        self.tol, self.max_iter = tol, max_iter
        n, p = self.X.shape
        if bandwidth is None:
            sd = self.X.std(axis=0, ddof=1) if n > 1 else np.ones(p)
            bandwidth = sd * (4.0 / ((p + 2) * n)) ** (1.0 / (p + 4))
        self.bandwidth = np.broadcast_to(np.asarray(bandwidth, dtype=float), (p,)).copy()
        if p and np.any(~(self.bandwidth > 0)):
            raise TurnbullError("bandwidth must be positive in every coordinate")
        self.marginal, *_ = turnbull_em(self._A, tol=tol, max_iter=max_iter)
        self.t_max = _default_t_max(data)
        self._cache: dict[bytes, np.ndarray] = {}

    def masses_at(self, x0) -> np.ndarray:
        x0 = np.asarray(x0, dtype=float).reshape(-1)
        key = x0.tobytes()
        if key not in self._cache:
            if x0.size == 0:
                self._cache[key] = self.marginal
            else:
                z = (x0[None, :] - self.X) / self.bandwidth
                w = np.exp(-0.5 * np.sum(z * z, axis=1))
                if not w.sum() > 1e-300:
                    w = np.ones_like(w)
                m, *_ = turnbull_em(self._A, w, tol=self.tol, max_iter=self.max_iter, init=self.marginal)
                self._cache[key] = m
        return self._cache[key]

    def _per_row(self, X, fn):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        uniq, inv = np.unique(X, axis=0, return_inverse=True)
        inv = inv.reshape(-1)
        out = np.empty(X.shape[0])
        for k, x0 in enumerate(uniq):
            rows = np.flatnonzero(inv == k)
            out[rows] = fn(self.masses_at(x0), rows)
        return out

    def _cdf(self, t, X):
        return self._per_row(X, lambda m, rows: self._step_cdf(t[rows], m))

    def invert_survival(self, q, X, t_max=None):
        q, X = _broadcast(q, X)
        t_max = self.t_max if t_max is None else float(t_max)
        return self._per_row(
            X, lambda m, rows: self._step_first(m, 1.0 - q[rows], False, t_max)
        )

    def first_cdf_exceed(self, c, X, t_max=None):
        c, X = _broadcast(c, X)
        t_max = self.t_max if t_max is None else float(t_max)
        return self._per_row(X, lambda m, rows: self._step_first(m, c[rows], True, t_max))

    def to_dict(self) -> dict:
        return {
            "model": self.name,
            "l": self.l.tolist(),
            "u": [_jf(v) for v in self.u],
            "X": self.X.tolist(),
            "bandwidth": self.bandwidth.tolist(),
            "tol": self.tol,
            "max_iter": self.max_iter,
            "t_max": _jf(self.t_max),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KernelTurnbullModel":
        X = np.asarray(d["X"], dtype=float).reshape(len(d["l"]), -1)
        data = Dataset(d["l"], [float(v) for v in d["u"]], X)
        return cls(data, d["bandwidth"] or None, d["tol"], d["max_iter"])


def _broadcast(v, X):
    v = np.atleast_1d(np.asarray(v, dtype=float))
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = max(v.size, X.shape[0])
    return np.broadcast_to(v, (n,)).copy(), np.broadcast_to(X, (n, X.shape[1]))


def kernel_turnbull_fit(data: Dataset, bandwidth=None, tol=1e-6, max_iter=2000) -> KernelTurnbullModel:
    return KernelTurnbullModel(data, bandwidth, tol, max_iter)
