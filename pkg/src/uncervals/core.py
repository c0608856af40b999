"""Domain types, dataset container, seeded splitting and CSV I/O."""

from __future__ import annotations

import csv
import math
import zlib
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

__all__ = [
    "ConditionalCdfModel",
    "Dataset",
    "DatasetError",
    "DatasetParseError",
    "DatasetValidationError",
    "IntervalObservation",
    "SplitPlan",
    "exact_mask",
    "load_dataset",
    "make_split",
    "rng_stream",
    "save_dataset",
]

EXACT_RTOL = 1e-12


class DatasetError(ValueError):
    pass


class DatasetParseError(DatasetError):
    """Raised for a CSV row that cannot be parsed; ``row`` is 1-based, header excluded."""

    def __init__(self, message: str, row: int | None = None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class DatasetValidationError(DatasetError):
    pass


def exact_mask(l, u):
    """Rows whose endpoints coincide up to ``1e-12 * max(1, u)``."""
    l = np.asarray(l, dtype=float)
    u = np.asarray(u, dtype=float)
    finite = np.isfinite(u)
    scale = np.maximum(1.0, np.where(finite, u, 1.0))
    return finite & (u - l <= EXACT_RTOL * scale)


@dataclass(frozen=True)
class IntervalObservation:
    """One subject: event time known to lie in ``(l, u]`` with covariates ``x``.

    ``u = inf`` encodes right-censoring, ``l = 0`` with finite ``u`` encodes
    left-censoring and ``l == u`` an exactly observed time.
    """

    l: float
    u: float
    x: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "l", float(self.l))
        object.__setattr__(self, "u", float(self.u))
        object.__setattr__(self, "x", tuple(float(v) for v in self.x))
        _validate_row(self.l, self.u, self.x)

    @property
    def right_censored(self) -> bool:
        return math.isinf(self.u)

    @property
    def left_censored(self) -> bool:
        return self.l == 0.0 and not math.isinf(self.u)

    @property
    def exact(self) -> bool:
        return bool(exact_mask(self.l, self.u))


def _validate_row(l, u, x, row=None):
    where = "" if row is None else f"row {row}: "
    if not math.isfinite(l) or l < 0:
        raise DatasetValidationError(f"{where}lower endpoint must be finite and >= 0, got {l}")
    if math.isnan(u) or u == -math.inf:
        raise DatasetValidationError(f"{where}upper endpoint must be a time or inf, got {u}")
    if l > u:
        raise DatasetValidationError(f"{where}l > u ({l} > {u})")
    if not all(math.isfinite(v) for v in x):
        raise DatasetValidationError(f"{where}covariates must be finite")


class Dataset:
    """Immutable column store of interval-censored observations.

    Parameters
    ----------
    l, u : array_like, shape (n,)
        Interval endpoints; ``u`` may contain ``inf``.
    X : array_like, shape (n, p), optional
        Covariate matrix. A 1-d array is read as a single covariate.
    """

    def __init__(self, l, u, X=None):
        l = np.array(l, dtype=float).reshape(-1)
        u = np.array(u, dtype=float).reshape(-1)
        if l.shape != u.shape:
            raise DatasetValidationError("l and u must have the same length")
        if X is None:
            X = np.empty((l.size, 0))
        X = np.array(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.ndim != 2 or X.shape[0] != l.size:
            raise DatasetValidationError("X must have one row per observation")

        bad = ~np.isfinite(l) | (l < 0)
        bad |= np.isnan(u) | (u == -np.inf)
        bad |= l > u
        bad |= ~np.all(np.isfinite(X), axis=1)
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            _validate_row(l[i], u[i], X[i], row=i + 1)

        for arr in (l, u, X):
            arr.flags.writeable = False
        self._l, self._u, self._X = l, u, X

    @classmethod
    def from_observations(cls, observations: Iterable[IntervalObservation]) -> "Dataset":
        obs = list(observations)
        dims = {len(o.x) for o in obs}
        if len(dims) > 1:
            raise DatasetValidationError(f"mixed covariate dimensions: {sorted(dims)}")
        p = dims.pop() if dims else 0
        X = np.array([o.x for o in obs], dtype=float).reshape(len(obs), p)
        return cls([o.l for o in obs], [o.u for o in obs], X)

    @property
    def l(self) -> np.ndarray:
        return self._l

    @property
    def u(self) -> np.ndarray:
        return self._u

    @property
    def X(self) -> np.ndarray:
        return self._X

    @property
    def covariate_dim(self) -> int:
        return self._X.shape[1]

    @property
    def observations(self) -> list[IntervalObservation]:
        return [IntervalObservation(a, b, tuple(x)) for a, b, x in zip(self._l, self._u, self._X)]

    @property
    def right_censored(self) -> np.ndarray:
        return np.isinf(self._u)

    @property
    def left_censored(self) -> np.ndarray:
        return (self._l == 0) & np.isfinite(self._u)

    @property
    def exact(self) -> np.ndarray:
        return exact_mask(self._l, self._u)

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=int)
        return Dataset(self._l[idx], self._u[idx], self._X[idx])

    def __len__(self) -> int:
        return self._l.size

    def __getitem__(self, i) -> IntervalObservation:
        return IntervalObservation(self._l[i], self._u[i], tuple(self._X[i]))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            np.array_equal(self._l, other._l)
            and np.array_equal(self._u, other._u)
            and np.array_equal(self._X, other._X)
        )

    def __repr__(self) -> str:
        return f"Dataset(n={len(self)}, p={self.covariate_dim})"


def _format_float(v: float) -> str:
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(float(v))


def save_dataset(data: Dataset, path) -> None:
    """Write ``l,u,x1,...,xp`` CSV with round-trip float precision."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["l", "u"] + [f"x{j + 1}" for j in range(data.covariate_dim)])
        for a, b, x in zip(data.l, data.u, data.X):
            w.writerow([_format_float(a), _format_float(b)] + [_format_float(v) for v in x])


def load_dataset(path) -> Dataset:
    """Read a dataset written by :func:`save_dataset` (or by hand).

    The header must start with ``l,u``; remaining columns are covariates.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetParseError("empty file") from None
        header = [h.strip() for h in header]
        if header[:2] != ["l", "u"]:
            raise DatasetParseError(f"header must start with 'l,u', got {','.join(header)!r}")
        width = len(header)
        rows = []
        for k, rec in enumerate(reader, start=1):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != width:
                raise DatasetParseError(f"expected {width} fields, got {len(rec)}", row=k)
            try:
                vals = [float(c) for c in rec]
            except ValueError as exc:
                raise DatasetParseError(str(exc), row=k) from None
            _validate_row(vals[0], vals[1], vals[2:], row=k)
            rows.append(vals)
    arr = np.array(rows, dtype=float).reshape(len(rows), width)
    return Dataset(arr[:, 0], arr[:, 1], arr[:, 2:])


@dataclass(frozen=True)
class SplitPlan:
    """Disjoint 0-based index sets: ``fit_indices`` fit the model, the rest calibrate."""

    fit_indices: np.ndarray
    calibration_indices: np.ndarray
    seed: int
    fit_fraction: float = field(default=0.5)

    @property
    def n_total(self) -> int:
        return self.fit_indices.size + self.calibration_indices.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, SplitPlan):
            return NotImplemented
        return (
            self.seed == other.seed
            and np.array_equal(self.fit_indices, other.fit_indices)
            and np.array_equal(self.calibration_indices, other.calibration_indices)
        )


def make_split(n_total: int, fit_fraction: float = 0.5, seed: int = 0) -> SplitPlan:
    """Seeded random split of ``range(n_total)``.

    ``round(fit_fraction * n_total)`` indices go to the fitting part. Both
    index arrays are returned sorted.
    """
    if n_total < 4:
        raise ValueError(f"need at least 4 observations to split, got {n_total}")
    if not 0.0 < fit_fraction < 1.0:
        raise ValueError(f"fit_fraction must lie in (0, 1), got {fit_fraction}")
    n_fit = int(round(fit_fraction * n_total))
    if n_fit < 1 or n_fit > n_total - 1:
        raise ValueError(f"fit_fraction={fit_fraction} leaves an empty part for n_total={n_total}")
    perm = np.random.default_rng(np.random.SeedSequence(int(seed))).permutation(n_total)
    fit = np.sort(perm[:n_fit])
    cal = np.sort(perm[n_fit:])
    fit.flags.writeable = False
    cal.flags.writeable = False
    return SplitPlan(fit, cal, int(seed), float(fit_fraction))


def rng_stream(seed: int, name: str = "", *index: int) -> np.random.Generator:
    """Independent generator for a named sub-stream of a master seed.

    The stream is keyed on ``(seed, crc32(name), *index)`` so replications can
    be generated in any order or process and still match.
    """
    key = (zlib.crc32(name.encode()),) + tuple(int(i) for i in index) if name else tuple(
        int(i) for i in index
    )
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=key))


def derive_seed(seed: int, name: str, *index: int) -> int:
    """Integer seed for a named sub-stream (for APIs that take plain seeds)."""
    return int(rng_stream(seed, name, *index).integers(0, 2**63 - 1))


class ConditionalCdfModel(ABC):
    """A fitted conditional distribution ``F(t, x)`` of the event time.

    Subclasses implement :meth:`cdf` on aligned arrays. Survival inversion has a
    generic bisection fallback; models with closed forms or step functions
    override :meth:`invert_survival` and :meth:`first_cdf_exceed`.
    """

    name: str = "model"
    #: default horizon for inversions; ``inf`` only for closed-form models
    t_max: float = math.inf

    @abstractmethod
    def _cdf(self, t: np.ndarray, X: np.ndarray) -> np.ndarray:
        """CDF at finite ``t >= 0`` for matching rows of ``X``."""

    @abstractmethod
    def to_dict(self) -> dict:
        ...

    def cdf(self, t, X) -> np.ndarray:
        """Evaluate ``F(t_i, x_i)``; ``t`` and the rows of ``X`` broadcast.

        ``F(inf, x) = 1`` by convention.
        """
        t, X = _align(t, X)
        out = np.ones(t.shape, dtype=float)
        fin = np.isfinite(t)
        if fin.any():
            out[fin] = np.clip(self._cdf(t[fin], X[fin]), 0.0, 1.0)
        return out

    def sf(self, t, X) -> np.ndarray:
        return 1.0 - self.cdf(t, X)

    def invert_survival(self, q, X, t_max: float | None = None) -> np.ndarray:
        """``inf{t >= 0 : S(t, x) <= q}`` for each row, ``inf`` past ``t_max``."""
        q, X = _align(q, X)
        t_max = self.t_max if t_max is None else float(t_max)
        return _bisect_first(lambda t, rows: self.sf(t, X[rows]) <= q[rows], q.size, t_max)

    def first_cdf_exceed(self, c, X, t_max: float | None = None) -> np.ndarray:
        """``inf{t >= 0 : F(t, x) > c}``, the open right end of ``{F <= c}``."""
        c, X = _align(c, X)
        t_max = self.t_max if t_max is None else float(t_max)
        return _bisect_first(lambda t, rows: self.cdf(t, X[rows]) > c[rows], c.size, t_max)


def _align(v, X):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    v = np.atleast_1d(np.asarray(v, dtype=float))
    n = max(v.size, X.shape[0])
    if v.size not in (1, n) or X.shape[0] not in (1, n):
        raise ValueError(f"cannot align {v.size} values with {X.shape[0]} covariate rows")
    return np.broadcast_to(v, (n,)).copy(), np.broadcast_to(X, (n, X.shape[1]))


def _bisect_first(pred, n, t_max, atol=1e-9):
    """Smallest t in [0, t_max] with monotone ``pred`` true, per row; else inf."""
    out = np.full(n, np.inf)
    rows = np.arange(n)
    zero = pred(np.zeros(n), rows)
    out[zero] = 0.0
    if not math.isfinite(t_max):
        raise ValueError("bisection needs a finite t_max")
    todo = rows[~zero]
    if todo.size == 0:
        return out
    hit = pred(np.full(todo.size, t_max), todo)
    todo = todo[hit]
    lo = np.zeros(todo.size)
    hi = np.full(todo.size, t_max)
    n_iter = max(1, int(math.ceil(math.log2(max(t_max, atol) / atol))) + 1)
    for _ in range(n_iter):
        mid = 0.5 * (lo + hi)
        ok = pred(mid, todo)
        hi = np.where(ok, mid, hi)
        lo = np.where(ok, lo, mid)
    out[todo] = hi
    return out

