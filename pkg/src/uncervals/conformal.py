"""Split-conformal prediction sets for interval-censored targets.

A conditional CDF ``F1`` is fitted on one part of the data. On the other part
each interval ``(L, U]`` is mapped to the probability scale as
``(F1(L, X), F1(U, X))``. Pseudo-scores are resampled from these border pairs:
either the left border itself (mode ``"e0"``, finite-sample valid and
conservative) or a uniform draw between the borders (mode ``"estar"``,
asymptotically exact). The conformal quantile of ``|Phi* - b|`` then defines
``{t : |F1(t, x) - b| <= q}``, which for ``b = 1`` is the lower predictive
bound ``[L(x), inf)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import ConditionalCdfModel, Dataset, SplitPlan, derive_seed, make_split, rng_stream
from .estimators import fit_estimator, model_from_dict

__all__ = [
    "BorderScores",
    "CalibrationResult",
    "PredictionSet",
    "UncervalsFit",
    "border_scores",
    "bootstrap_phi",
    "calibrate",
    "conformal_quantile",
    "fit_uncervals",
    "interval_distribution",
    "normalize_mode",
    "prediction_bounds",
    "prediction_set",
    "psi",
    "uncervals",
]

_MODES = {"e0": "e0", "0": "e0", "estar": "estar", "*": "estar", "e*": "estar"}


def normalize_mode(mode) -> str:
    key = str(mode).strip().lower()
    if key not in _MODES:
        raise ValueError(f"unknown mode {mode!r}; use 'e0' or 'estar'")
    return _MODES[key]


def psi(phi, b: float = 1.0):
    """Conformity score ``|phi - b|``."""
    return np.abs(np.asarray(phi, dtype=float) - b)


@dataclass(frozen=True)
class BorderScores:
    """``lam = F1(L, X)`` and ``ups = F1(U, X)`` over the calibration rows."""

    lam: np.ndarray
    ups: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float).reshape(-1)
        ups = np.asarray(self.ups, dtype=float).reshape(-1)
        if lam.shape != ups.shape:
            raise ValueError("lam and ups must have equal length")
        if np.any(lam < 0) or np.any(ups > 1) or np.any(lam > ups):
            raise ValueError("border scores must satisfy 0 <= lam <= ups <= 1")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "ups", ups)

    def __len__(self) -> int:
        return self.lam.size


def border_scores(model: ConditionalCdfModel, data: Dataset) -> BorderScores:
    lam = model.cdf(data.l, data.X)
    ups = model.cdf(data.u, data.X)
    ups[np.isinf(data.u)] = 1.0
    tol = 1e-12
    if np.any(~np.isfinite(lam)) or np.any(~np.isfinite(ups)):
        raise FloatingPointError("model returned non-finite CDF values")
    if np.any(lam < -tol) or np.any(ups > 1 + tol) or np.any(lam > ups + tol):
        raise FloatingPointError("model CDF violates 0 <= F(L) <= F(U) <= 1")
    lam = np.clip(lam, 0.0, 1.0)
    ups = np.clip(np.maximum(ups, lam), 0.0, 1.0)
    return BorderScores(lam, ups)


def bootstrap_phi(scores: BorderScores, mode="estar", seed=0, size: int | None = None) -> np.ndarray:
    """Resampled pseudo-scores ``Phi*``.

    Each draw picks a calibration row ``j`` uniformly with replacement and
    returns ``lam_j`` (``"e0"``) or ``lam_j + (ups_j - lam_j) * V`` with
    ``V ~ Uniform(0, 1)`` (``"estar"``). ``seed`` may be an int or a Generator.
    """
    mode = normalize_mode(mode)
    n = len(scores)
    if n < 1:
        raise ValueError("need at least one calibration score")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(
        np.random.SeedSequence(int(seed))
    )
    size = n if size is None else int(size)
    j = rng.integers(0, n, size=size)
    lam = scores.lam[j]
    if mode == "e0":
        return lam.copy()
    width = scores.ups[j] - lam
    return np.clip(lam + width * rng.uniform(size=size), 0.0, 1.0)


def quantile_rank(n: int, alpha: float) -> int:
    """``ceil((1 - alpha) * (n + 1))`` with round-off guarded."""
    x = (1.0 - alpha) * (n + 1)
    return int(math.ceil(round(x, 9)))


def conformal_quantile(v_star, alpha: float) -> float:
    """The ``ceil((1 - alpha)(n + 1))``-th smallest score; ``inf`` when that exceeds ``n``."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    v = np.sort(np.asarray(v_star, dtype=float).reshape(-1))
    n = v.size
    if n < 1:
        raise ValueError("need at least one score")
    k = quantile_rank(n, alpha)
    if k > n:
        return math.inf
    return float(v[max(k, 1) - 1])


def _jf(v):
    v = float(v)
    return v if math.isfinite(v) else ("inf" if v > 0 else "-inf")


@dataclass
class CalibrationResult:
    mode: str
    b: float
    alpha: float
    phi_star: np.ndarray
    v_star: np.ndarray
    q_hat: float
    seed: int
    t_max: float = math.inf

    @property
    def n(self) -> int:
        return self.phi_star.size

    @property
    def saturated(self) -> bool:
        return math.isinf(self.q_hat)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "b": self.b,
            "alpha": self.alpha,
            "n": self.n,
            "q_hat": _jf(self.q_hat),
            "seed": self.seed,
            "t_max": _jf(self.t_max),
            "phi_star": self.phi_star.tolist(),
            "v_star": self.v_star.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CalibrationResult":
        return cls(
            normalize_mode(d["mode"]), float(d["b"]), float(d["alpha"]),
            np.asarray(d["phi_star"], dtype=float), np.asarray(d["v_star"], dtype=float),
            float(d["q_hat"]), int(d["seed"]), float(d.get("t_max", math.inf)),
        )


def calibrate(
    model: ConditionalCdfModel,
    calibration_data: Dataset,
    alpha: float,
    b: float = 1.0,
    mode="estar",
    seed=0,
    t_max: float | None = None,
) -> CalibrationResult:
    """Border scores, bootstrap pseudo-scores and the conformal quantile."""
    if not 0.0 <= b <= 1.0:
        raise ValueError(f"b must lie in [0, 1], got {b}")
    mode = normalize_mode(mode)
    scores = border_scores(model, calibration_data)
    phi = bootstrap_phi(scores, mode, seed)
    v = psi(phi, b)
    q = conformal_quantile(v, alpha)
    t_max = model.t_max if t_max is None else float(t_max)
    return CalibrationResult(mode, float(b), float(alpha), phi, v, q,
                             seed if isinstance(seed, int) else -1, t_max)


@dataclass(frozen=True)
class PredictionSet:
    """``{t : lo <= t <= hi}``; for ``b = 1`` this is ``[lpb, inf)``."""

    x: tuple
    lo: float
    hi: float
    alpha: float | None = None

    @property
    def lpb(self) -> float:
        return self.lo

    def __contains__(self, t) -> bool:
        return self.lo <= t <= self.hi


def prediction_bounds(model: ConditionalCdfModel, X, q_hat: float, b: float = 1.0, t_max=None):
    """Vectorized ends ``(lo, hi)`` of ``{t >= 0 : |F1(t, x) - b| <= q_hat}``.

    ``lo = inf{t : F1(t, x) >= b - q_hat}`` and ``hi = inf{t : F1(t, x) > b + q_hat}``.
    ``lo`` is ``inf`` when the CDF stays below ``b - q_hat`` up to ``t_max``;
    ``hi`` is ``inf`` when ``b + q_hat >= 1`` or the CDF never exceeds it.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = X.shape[0]
    if math.isinf(q_hat):
        return np.zeros(n), np.full(n, np.inf)
    lower_level = b - q_hat
    upper_level = b + q_hat
    if lower_level <= 0:
        lo = np.zeros(n)
    elif b == 1.0:
        lo = model.invert_survival(np.full(n, q_hat), X, t_max)
    else:
        lo = model.invert_survival(np.full(n, 1.0 - lower_level), X, t_max)
    if upper_level >= 1:
        hi = np.full(n, np.inf)
    else:
        hi = model.first_cdf_exceed(np.full(n, upper_level), X, t_max)
    return lo, hi


def prediction_set(model, x_new, q_hat: float, b: float = 1.0, t_max=None, alpha=None) -> list[PredictionSet]:
    X = np.atleast_2d(np.asarray(x_new, dtype=float))
    lo, hi = prediction_bounds(model, X, q_hat, b, t_max)
    return [PredictionSet(tuple(x), float(a), float(c), alpha) for x, a, c in zip(X, lo, hi)]


def interval_distribution(scores: BorderScores, t):
    """Interval distribution: average of ``g_t(lam_i, ups_i)``.

    ``g_t(l, u) = 1{u <= t} + 1{l <= t < u} (t - l) / (u - l)``, and a
    collapsed pair ``l == u`` contributes the step ``1{l <= t}``.
    """
    t = np.asarray(t, dtype=float)
    tt = np.atleast_1d(t)[:, None]
    lam, ups = scores.lam[None, :], scores.ups[None, :]
    width = ups - lam
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        ramp = np.where((lam <= tt) & (tt < ups), (tt - lam) / np.where(width > 0, width, 1.0), 0.0)
    ramp = np.clip(ramp, 0.0, 1.0)
    g = np.where(width > 0, (ups <= tt) + ramp, lam <= tt)
    out = g.mean(axis=1)
    return out.reshape(t.shape) if t.ndim else float(out[0])


@dataclass
class UncervalsFit:
    """A fitted model together with its split and calibration."""

    model: ConditionalCdfModel
    split: SplitPlan
    calibration: CalibrationResult

    def bounds(self, X):
        c = self.calibration
        return prediction_bounds(self.model, X, c.q_hat, c.b, c.t_max)

    def predict(self, X) -> list[PredictionSet]:
        c = self.calibration
        return prediction_set(self.model, X, c.q_hat, c.b, c.t_max, c.alpha)


def _fit(estimator, data: Dataset, options: dict) -> ConditionalCdfModel:
    if isinstance(estimator, ConditionalCdfModel):
        return estimator
    if isinstance(estimator, str):
        return fit_estimator(estimator, data, **options)
    if isinstance(estimator, dict):
        return model_from_dict(estimator)
    return estimator(data)


def fit_uncervals(
    data: Dataset,
    alpha: float,
    b: float = 1.0,
    mode="estar",
    fit_fraction: float = 0.5,
    seed: int = 0,
    estimator="weibph",
    estimator_options: dict | None = None,
    t_max: float | None = None,
) -> UncervalsFit:
    """Split, fit, calibrate.

    ``estimator`` is an estimator name, a fitted model used as is (e.g. the
    oracle), or a callable mapping the fitting split to a model. The split and
    the bootstrap draw from the ``"split"`` and ``"boot"`` sub-streams of
    ``seed``. ``t_max`` defaults to ten times the largest finite endpoint in
    the fitting split.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    split = make_split(len(data), fit_fraction, derive_seed(seed, "split"))
    fit_part = data.subset(split.fit_indices)
    cal_part = data.subset(split.calibration_indices)
    model = _fit(estimator, fit_part, estimator_options or {})
    if t_max is None:
        ends = np.concatenate([fit_part.l, fit_part.u[np.isfinite(fit_part.u)]])
        t_max = 10.0 * float(ends.max()) if ends.size and ends.max() > 0 else model.t_max
    cal = calibrate(model, cal_part, alpha, b, mode, rng_stream(seed, "boot"), t_max)
    cal.seed = int(seed)
    return UncervalsFit(model, split, cal)


def uncervals(
    data: Dataset,
    alpha: float,
    b: float = 1.0,
    mode="estar",
    fit_fraction: float = 0.5,
    seed: int = 0,
    estimator="weibph",
    x_new: Sequence | np.ndarray = (),
    **kwargs,
) -> list[PredictionSet]:
    """Prediction sets at each row of ``x_new`` at level ``1 - alpha``."""
    fitted = fit_uncervals(data, alpha, b, mode, fit_fraction, seed, estimator, **kwargs)
    X = np.asarray(x_new, dtype=float)
    if X.ndim < 2:
        X = X.reshape(-1, max(data.covariate_dim, 1))
    if X.shape[0] == 0:
        return []
    return fitted.predict(X)
