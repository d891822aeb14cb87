"""Limited-memory BFGS with a backtracking Armijo line search.

The driver is deliberately small: a two-loop recursion for the search
direction, halving backtracking, and a record of every accepted iterate so
callers can audit the descent property.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

STATUS_CONVERGED = "converged"
STATUS_MAX_ITER = "max_iter"
STATUS_LINE_SEARCH = "line_search_failed"


class NumericalError(RuntimeError):
    """Raised when the objective or gradient becomes non-finite."""


@dataclass
class OptimizeResult:
    x: np.ndarray
    fun: float
    grad_norm: float
    status: str
    iterations: int
    # one (objective, grad inf-norm) pair per accepted iterate, starting point included
    history: list[tuple[float, float]] = field(default_factory=list)


def _two_loop(g, pairs):
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * np.dot(s, q)
        alphas.append(a)
        q -= a * y
    if pairs:
        s, y, _ = pairs[-1]
        q *= np.dot(s, y) / np.dot(y, y)
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * np.dot(y, q)
        q += (a - b) * s
    return -q


def lbfgs(
    fun_and_grad: Callable[[np.ndarray], tuple[float, np.ndarray]],
    x0: np.ndarray,
    max_iter: int = 400,
    grad_tol: float = 1e-5,
    history_size: int = 10,
    c1: float = 1e-4,
    max_backtracks: int = 40,
    max_step: float | None = None,
) -> OptimizeResult:
    """Minimize a smooth function given a callable returning ``(f, grad)``.

    Terminates when the gradient infinity-norm drops below ``grad_tol`` or
    after ``max_iter`` accepted steps. Every accepted step satisfies the
    Armijo condition, so ``history`` objectives never increase. A line
    search that cannot find a decrease ends the run with status
    ``line_search_failed`` and the best point found so far. ``max_step``
    caps the Euclidean length of every trial step.
    """
    x = np.array(x0, dtype=float, copy=True)
    f, g = fun_and_grad(x)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise NumericalError("non-finite objective at the starting point")
    gnorm = float(np.max(np.abs(g))) if g.size else 0.0
    history = [(float(f), gnorm)]
    pairs: deque = deque(maxlen=history_size)

    status = STATUS_MAX_ITER
    it = 0
    while it < max_iter:
        if gnorm < grad_tol:
            status = STATUS_CONVERGED
            break
        d = _two_loop(g, pairs)
        slope = float(np.dot(g, d))
        if not pairs or slope >= 0.0:
            # first step or lost curvature information: scaled steepest descent
            pairs.clear()
            d = -g / max(np.linalg.norm(g), 1.0)
            slope = float(np.dot(g, d))
        if max_step is not None:
            dn = float(np.linalg.norm(d))
            if dn > max_step:
                d *= max_step / dn
                slope *= max_step / dn

        step = 1.0
        accepted = False
        for _ in range(max_backtracks):
            x_new = x + step * d
            f_new, g_new = fun_and_grad(x_new)
            if np.isfinite(f_new) and f_new <= f + c1 * step * slope:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            status = STATUS_LINE_SEARCH
            break
        if not np.all(np.isfinite(g_new)):
            raise NumericalError("non-finite gradient during optimization")

        s = x_new - x
        y = g_new - g
        sy = float(np.dot(s, y))
        if sy > 1e-10 * float(np.dot(y, y)) and sy > 0.0:
            pairs.append((s, y, 1.0 / sy))
        x, f, g = x_new, float(f_new), g_new
        gnorm = float(np.max(np.abs(g)))
        it += 1
        history.append((f, gnorm))
    else:
        if gnorm < grad_tol:
            status = STATUS_CONVERGED

    return OptimizeResult(x=x, fun=float(f), grad_norm=gnorm, status=status,
                          iterations=it, history=history)
