"""BFGS with backtracking line search."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = ["OptimizeResult", "bfgs", "numerical_hessian"]


@dataclass
class OptimizeResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    n_iter: int
    converged: bool
    message: str

    @property
    def grad_norm(self) -> float:
        return float(np.linalg.norm(self.grad))


def bfgs(
    fun: Callable[[np.ndarray], tuple[float, np.ndarray]],
    x0,
    gtol: float = 1e-6,
    max_iter: int = 500,
    max_step: float = 5.0,
) -> OptimizeResult:
    """Minimize ``fun`` which returns ``(value, gradient)``.

    Converges when the Euclidean gradient norm drops below ``gtol``. Steps are
    capped at ``max_step`` in Euclidean length. A trial point is accepted when
    it satisfies the Armijo condition, or, once objective changes are lost in
    round-off, when it leaves the value unchanged to 1e-12 relative and
    shrinks the gradient norm.
    """
    x = np.array(x0, dtype=float)
    f, g = fun(x)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise FloatingPointError("objective is not finite at the starting point")
    n = x.size
    Hinv = np.eye(n)
    scaled = False
    for it in range(1, max_iter + 1):
        gnorm = np.linalg.norm(g)
        if gnorm < gtol:
            return OptimizeResult(x, f, g, it - 1, True, "gradient norm below tolerance")
        d = -Hinv @ g
        slope = float(g @ d)
        if slope >= 0:
            Hinv = np.eye(n)
            d = -g
            slope = -float(g @ g)
        dn = np.linalg.norm(d)
        step = min(1.0, max_step / dn) if dn > 0 else 1.0
        accepted = False
        for _ in range(60):
            x_new = x + step * d
            f_new, g_new = fun(x_new)
            if np.isfinite(f_new) and np.all(np.isfinite(g_new)):
                if f_new <= f + 1e-4 * step * slope:
                    accepted = True
                    break
                flat = abs(f_new - f) <= 1e-12 * max(1.0, abs(f))
                if flat and np.linalg.norm(g_new) < gnorm:
                    accepted = True
                    break
            step *= 0.5
        if not accepted:
            if np.allclose(Hinv, np.eye(n)):
                return OptimizeResult(x, f, g, it, gnorm < gtol, "line search failed")
            Hinv = np.eye(n)
            scaled = False
            continue
        s = x_new - x
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            if not scaled:
                Hinv = np.eye(n) * (sy / float(y @ y))
                scaled = True
            rho = 1.0 / sy
            V = np.eye(n) - rho * np.outer(s, y)
            Hinv = V @ Hinv @ V.T + rho * np.outer(s, s)
        x, f, g = x_new, f_new, g_new
    return OptimizeResult(x, f, g, max_iter, bool(np.linalg.norm(g) < gtol), "max_iter reached")


def numerical_hessian(grad: Callable[[np.ndarray], np.ndarray], x, h: float = 1e-5) -> np.ndarray:
    """Symmetrized central-difference Jacobian of an analytic gradient."""
    x = np.asarray(x, dtype=float)
    n = x.size
    H = np.empty((n, n))
    for k in range(n):
        e = np.zeros(n)
        e[k] = h
        H[:, k] = (grad(x + e) - grad(x - e)) / (2 * h)
    return 0.5 * (H + H.T)
