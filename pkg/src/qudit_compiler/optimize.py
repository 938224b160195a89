"""Limited-memory BFGS with Armijo backtracking.

Small, deterministic and dependency-free so the compiler can stop exactly
when an externally defined goal is reached.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass
class LbfgsResult:
    x: np.ndarray
    fun: float
    iterations: int
    evaluations: int
    converged: bool
    message: str


def lbfgs(
    fun: Callable[[np.ndarray], tuple[float, np.ndarray]],
    x0: np.ndarray,
    *,
    max_iterations: int = 500,
    history: int = 10,
    target: float | None = None,
    gtol: float = 1e-12,
    ftol: float = 1e-16,
    c1: float = 1e-4,
    shrink: float = 0.5,
    max_backtracks: int = 40,
) -> LbfgsResult:
    """Minimize ``fun`` (returning value and gradient) from ``x0``.

    Stops with ``converged=True`` once ``fun <= target``; otherwise runs
    until the gradient norm drops below ``gtol``, the decrease stalls below
    ``ftol`` or ``max_iterations`` is hit (``converged=False``).
    """
    x = np.array(x0, dtype=float, copy=True)
    f, g = fun(x)
    nfev = 1
    s_hist: deque = deque(maxlen=history)
    y_hist: deque = deque(maxlen=history)
    rho_hist: deque = deque(maxlen=history)

    def done(it, msg, ok):
        return LbfgsResult(x, float(f), it, nfev, ok, msg)

    for it in range(max_iterations + 1):
        if target is not None and f <= target:
            return done(it, "target reached", True)
        if it == max_iterations:
            break
        gnorm = np.linalg.norm(g)
        if gnorm <= gtol:
            return done(it, "gradient below tolerance", target is None)

        # two-loop recursion
        direction = -g.copy()
        alphas = []
        for s, y, rho in zip(reversed(s_hist), reversed(y_hist), reversed(rho_hist)):
            a = rho * (s @ direction)
            direction -= a * y
            alphas.append(a)
        if s_hist:
            direction *= (s_hist[-1] @ y_hist[-1]) / (y_hist[-1] @ y_hist[-1])
        else:
            direction /= max(gnorm, 1.0)
        for (s, y, rho), a in zip(zip(s_hist, y_hist, rho_hist), reversed(alphas)):
            b = rho * (y @ direction)
            direction += (a - b) * s

        slope = g @ direction
        if slope >= 0:
            # lost descent: restart from steepest descent
            s_hist.clear(), y_hist.clear(), rho_hist.clear()
            direction = -g / max(gnorm, 1.0)
            slope = g @ direction

        step = 1.0
        for _ in range(max_backtracks):
            x_new = x + step * direction
            f_new, g_new = fun(x_new)
            nfev += 1
            if f_new <= f + c1 * step * slope:
                break
            step *= shrink
        else:
            return done(it, "line search failed", False)

        s = x_new - x
        y = g_new - g
        sy = s @ y
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            s_hist.append(s)
            y_hist.append(y)
            rho_hist.append(1.0 / sy)
        decrease = f - f_new
        x, f, g = x_new, f_new, g_new
        if decrease <= ftol * max(1.0, abs(f)):
            return done(it + 1, "decrease below tolerance", target is None)
    return done(max_iterations, "iteration limit", False)
