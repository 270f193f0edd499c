"""Damped Newton ascent for smooth concave objectives."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ConvergenceError(RuntimeError):
    """An iterative solver exhausted its budget or hit a numerical failure."""


@dataclass
class NewtonResult:
    x: np.ndarray
    value: float
    grad_norm: float
    iterations: int
    converged: bool


def newton_maximize(fun, x0, tol=1e-10, max_iter=100, armijo=1e-4, cond_limit=1e12):
    """Maximize a concave ``fun(x) -> (value, grad, hess)``.

    Backtracking halves the step until the Armijo condition holds.  A 1e-10
    diagonal jitter is added to the Newton system when it is ill-conditioned.
    Returns a :class:`NewtonResult`; ``converged`` is False when the gradient
    norm is still above ``tol`` after ``max_iter`` steps.
    """
    x = np.array(x0, dtype=float)
    f, g, H = fun(x)
    it = 0
    while True:
        gn = float(np.linalg.norm(g))
        if gn < tol:
            return NewtonResult(x, f, gn, it, True)
        if it >= max_iter:
            return NewtonResult(x, f, gn, it, False)
        it += 1
        A = -H
        if np.linalg.cond(A) > cond_limit:
            A = A + 1e-10 * np.eye(len(x))
        try:
            step = np.linalg.solve(A, g)
        except np.linalg.LinAlgError:
            step = g
        slope = float(g @ step)
        if not slope > 0:
            step, slope = g, float(g @ g)
        t = 1.0
        if slope < 1e-13 * (1 + abs(f)):
            # increase below float resolution of f: take the pure Newton step
            fn, gn_vec, Hn = fun(x + step)
            if np.isfinite(fn) and np.linalg.norm(gn_vec) < gn:
                x, f, g, H = x + step, fn, gn_vec, Hn
                continue
        while True:
            xn = x + t * step
            fn, gn_vec, Hn = fun(xn)
            if np.isfinite(fn) and fn >= f + armijo * t * slope:
                break
            t *= 0.5
            if t < 1e-12:
                # no ascent possible at this precision: accept the current point
                if np.isfinite(fn) and fn >= f:
                    break
                return NewtonResult(x, f, gn, it, gn < tol)
        x, f, g, H = xn, fn, gn_vec, Hn
