"""Conditional CDF estimators fitted on the first split."""

from __future__ import annotations

from ..core import ConditionalCdfModel, Dataset
from .turnbull import (
    KernelTurnbullModel,
    TurnbullError,
    TurnbullFit,
    kernel_turnbull_fit,
    maximal_intersections,
    turnbull_em,
    turnbull_fit,
)
from .weibull import (
    FEATURES,
    OracleModel,
    WeibullPhError,
    WeibullPhFit,
    weibull_ph_fit,
    weibull_ph_loglik,
)

__all__ = [
    "ESTIMATORS",
    "FEATURES",
    "KernelTurnbullModel",
    "OracleModel",
    "TurnbullError",
    "TurnbullFit",
    "WeibullPhError",
    "WeibullPhFit",
    "evaluate_cdf",
    "fit_estimator",
    "invert_survival",
    "kernel_turnbull_fit",
    "maximal_intersections",
    "model_from_dict",
    "turnbull_em",
    "turnbull_fit",
    "weibull_ph_fit",
    "weibull_ph_loglik",
]

ESTIMATORS = {
    "turnbull": turnbull_fit,
    "weibph": weibull_ph_fit,
    "kturnbull": kernel_turnbull_fit,
}


def fit_estimator(name: str, data: Dataset, **options) -> ConditionalCdfModel:
    """Fit one of ``turnbull``, ``weibph`` or ``kturnbull`` to ``data``."""
    try:
        fit = ESTIMATORS[name]
    except KeyError:
        raise ValueError(f"unknown estimator {name!r}; choose from {sorted(ESTIMATORS)}") from None
    return fit(data, **options)


def evaluate_cdf(model: ConditionalCdfModel, t, x):
    return model.cdf(t, x)


def invert_survival(model: ConditionalCdfModel, q, x, t_max=None):
    """``inf{t >= 0 : S(t, x) <= q}``; ``inf`` when the survival curve stays above ``q`` up to ``t_max``."""
    return model.invert_survival(q, x, t_max)


_LOADERS = {
    "turnbull": TurnbullFit.from_dict,
    "weibph": WeibullPhFit.from_dict,
    "oracle": OracleModel.from_dict,
    "kturnbull": KernelTurnbullModel.from_dict,
}


def model_from_dict(d: dict) -> ConditionalCdfModel:
    kind = d.get("model")
    if kind not in _LOADERS:
        raise ValueError(f"unknown model type {kind!r}")
    return _LOADERS[kind](d)
