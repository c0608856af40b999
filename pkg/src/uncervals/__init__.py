"""Conformal prediction sets for interval-censored event times."""

__version__ = "0.1.0"

from .conformal import (
    BorderScores,
    CalibrationResult,
    PredictionSet,
    UncervalsFit,
    border_scores,
    bootstrap_phi,
    calibrate,
    conformal_quantile,
    fit_uncervals,
    interval_distribution,
    prediction_bounds,
    prediction_set,
    psi,
    uncervals,
)
from .core import (
    ConditionalCdfModel,
    Dataset,
    DatasetError,
    DatasetParseError,
    DatasetValidationError,
    IntervalObservation,
    SplitPlan,
    load_dataset,
    make_split,
    save_dataset,
)
from .estimators import (
    KernelTurnbullModel,
    OracleModel,
    TurnbullFit,
    WeibullPhFit,
    fit_estimator,
    turnbull_fit,
    weibull_ph_fit,
)
from .simgen import Link, SimConfig, preset, simulate

__all__ = [
    "BorderScores",
    "CalibrationResult",
    "ConditionalCdfModel",
    "Dataset",
    "DatasetError",
    "DatasetParseError",
    "DatasetValidationError",
    "IntervalObservation",
    "KernelTurnbullModel",
    "Link",
    "OracleModel",
    "PredictionSet",
    "SimConfig",
    "SplitPlan",
    "TurnbullFit",
    "UncervalsFit",
    "WeibullPhFit",
    "border_scores",
    "bootstrap_phi",
    "calibrate",
    "conformal_quantile",
    "fit_estimator",
    "fit_uncervals",
    "interval_distribution",
    "load_dataset",
    "make_split",
    "prediction_bounds",
    "prediction_set",
    "preset",
    "psi",
    "save_dataset",
    "simulate",
    "turnbull_fit",
    "uncervals",
    "weibull_ph_fit",
]
