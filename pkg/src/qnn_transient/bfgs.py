"""BFGS with a strong-Wolfe line search.

Follows the usual bracketing/zoom construction with safeguarded cubic
interpolation.  The optimizer never aborts on a failed line search: it keeps
the best point seen and reports the failure through ``OptimizeResult.status``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

__all__ = ["OptimizeResult", "bfgs_minimize", "strong_wolfe"]

Objective = Callable[[np.ndarray], tuple]


@dataclass
class OptimizeResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    iterations: int
    evaluations: int
    status: str  # "converged", "max_iterations", "line_search_failed"

    @property
    def converged(self) -> bool:
        return self.status == "converged"


def _cubic_min(a, fa, ga, b, fb, gb):
    """Minimizer of the cubic through (a, fa, ga), (b, fb, gb), or None."""
    d1 = ga + gb - 3 * (fa - fb) / (a - b)
    disc = d1 * d1 - ga * gb
    if disc < 0:
        return None
    d2 = math.copysign(math.sqrt(disc), b - a)
    denom = gb - ga + 2 * d2
    if denom == 0:
        return None
    return b - (b - a) * (gb + d2 - d1) / denom


def strong_wolfe(phi, f0, g0, alpha0=1.0, c1=1e-4, c2=0.9, alpha_max=1e10, max_iter=40):
    """Find a step satisfying the strong Wolfe conditions.

    ``phi(alpha)`` returns (value, directional derivative, payload).  Returns
    (alpha, value, derivative, payload) or None when no such step was found.
    """
    if not g0 < 0:
        return None
    a_prev, f_prev, g_prev = 0.0, f0, g0
    a = alpha0
    for i in range(max_iter):
        fa, ga, pay = phi(a)
        if not math.isfinite(fa) or fa > f0 + c1 * a * g0 or (i > 0 and fa >= f_prev):
            return _zoom(phi, f0, g0, a_prev, f_prev, g_prev, a, fa, ga, c1, c2)
        if abs(ga) <= -c2 * g0:
            return a, fa, ga, pay
        if ga >= 0:
            return _zoom(phi, f0, g0, a, fa, ga, a_prev, f_prev, g_prev, c1, c2)
        a_prev, f_prev, g_prev = a, fa, ga
        if a >= alpha_max:
            return None
        a = min(2.0 * a, alpha_max)
    return None


def _zoom(phi, f0, g0, lo, flo, glo, hi, fhi, ghi, c1, c2, max_iter=40):
    for _ in range(max_iter):
        a = None
        if math.isfinite(fhi) and math.isfinite(ghi):
            a = _cubic_min(lo, flo, glo, hi, fhi, ghi)
        left, right = min(lo, hi), max(lo, hi)
        margin = 0.1 * (right - left)
        if a is None or not (left + margin <= a <= right - margin):
            a = 0.5 * (lo + hi)
        fa, ga, pay = phi(a)
        if not math.isfinite(fa) or fa > f0 + c1 * a * g0 or fa >= flo:
            hi, fhi, ghi = a, fa, ga
        else:
            if abs(ga) <= -c2 * g0:
                return a, fa, ga, pay
            if ga * (hi - lo) >= 0:
                hi, fhi, ghi = lo, flo, glo
            lo, flo, glo = a, fa, ga
        if abs(hi - lo) <= 1e-16 * max(1.0, abs(lo)):
            break
    return None


def bfgs_minimize(
    objective: Objective,
    x0,
    max_iterations: int = 500,
    gradient_tolerance: float = 1e-8,
    c1: float = 1e-4,
    c2: float = 0.9,
    callback: Optional[Callable[[int, np.ndarray, float, np.ndarray], None]] = None,
) -> OptimizeResult:
    """Minimize ``objective(x) -> (value, gradient)`` from ``x0``.

    Stops when the gradient's infinity norm drops below
    ``gradient_tolerance`` or after ``max_iterations`` updates.
    """
    x = np.array(x0, dtype=float)
    f, g = objective(x)
    g = np.asarray(g, dtype=float)
    evals = 1
    if not math.isfinite(f) or not np.all(np.isfinite(g)):
        raise ValueError("objective is not finite at the initial point")

    n = x.size
    hinv = np.eye(n)
    scaled = False
    best = (f, x.copy(), g.copy())
    status = "max_iterations"
    it = 0

    for it in range(1, max_iterations + 1):
        if np.max(np.abs(g), initial=0.0) < gradient_tolerance:
            status = "converged"
            it -= 1
            break
        p = -hinv @ g
        slope = float(g @ p)
        if not slope < 0:
            # lost descent; fall back to steepest descent once
            hinv = np.eye(n)
            scaled = False
            p = -g
            slope = float(g @ p)

        def phi(alpha, x=x, p=p):
            nonlocal evals
            evals += 1
            xa = x + alpha * p
            fa, ga = objective(xa)
            ga = np.asarray(ga, dtype=float)
            if not np.all(np.isfinite(ga)):
                fa = math.inf
            return float(fa), float(ga @ p), (xa, ga)

        alpha0 = 1.0 if scaled else min(1.0, 1.0 / max(np.max(np.abs(g)), 1e-12))
        found = strong_wolfe(phi, f, slope, alpha0=alpha0, c1=c1, c2=c2)
        if found is None:
            status = "line_search_failed"
            break
        alpha, f_new, _, (x_new, g_new) = found
        s = x_new - x
        yv = g_new - g
        x, f, g = x_new, f_new, g_new
        if f < best[0]:
            best = (f, x.copy(), g.copy())
        if callback is not None:
            callback(it, x, f, g)

        sy = float(s @ yv)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(yv):
            if not scaled:
                hinv = np.eye(n) * (sy / float(yv @ yv))
                scaled = True
            rho = 1.0 / sy
            hy = hinv @ yv
            hinv = (
                hinv
                - rho * (np.outer(s, hy) + np.outer(hy, s))
                + (rho * rho * float(yv @ hy) + rho) * np.outer(s, s)
            )
    else:
        if np.max(np.abs(g), initial=0.0) < gradient_tolerance:
            status = "converged"

    f_best, x_best, g_best = best
    if f <= f_best or status == "converged":
        # a converged point honours the gradient test; best-seen may differ only by rounding
        f_best, x_best, g_best = f, x, g
    return OptimizeResult(x_best, float(f_best), g_best, it, evals, status)
