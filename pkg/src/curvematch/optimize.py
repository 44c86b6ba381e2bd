"""Limited-memory BFGS with a bracketing weak-Wolfe line search."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateCurve, NonFiniteValue, ZeroEdge

CONVERGED = "converged"
MAX_ITERATIONS = "max_iterations"
LINESEARCH_FAILED = "linesearch_failed"


@dataclass(frozen=True)
class OptimizerSettings:
    """L-BFGS and multigrid parameters.

    ``g_tol`` is relative to the gradient norm at the starting point.
    ``levels`` lists ``(N_t, N_theta, P)`` from coarsest to finest.
    """

    memory: int = 10
    max_iterations: int = 500
    g_tol: float = 1e-6
    f_tol: float = 1e-12
    c1: float = 1e-4
    c2: float = 0.9
    max_linesearch: int = 60
    levels: tuple = ((5, 20, 50), (10, 40, 100))

    def __post_init__(self):
        if not 0 < self.c1 < self.c2 < 1:
            raise ValueError(f"need 0 < c1 < c2 < 1, got c1={self.c1}, c2={self.c2}")
        if self.memory < 1 or self.max_iterations < 0:
            raise ValueError("memory must be >= 1 and max_iterations >= 0")
        levels = tuple(tuple(int(v) for v in lvl) for lvl in self.levels)
        if not levels:
            raise ValueError("at least one discretization level is required")
        for lvl in levels:
            if len(lvl) != 3:
                raise ValueError(f"level {lvl} is not (N_t, N_theta, P)")
        for a, b in zip(levels, levels[1:]):
            if not all(x <= y for x, y in zip(a, b)) or a == b:
                raise ValueError(f"levels must increase in resolution: {a} -> {b}")
        object.__setattr__(self, "levels", levels)

    def as_dict(self):
        return {"memory": self.memory, "max_iterations": self.max_iterations,
                "g_tol": self.g_tol, "f_tol": self.f_tol, "c1": self.c1, "c2": self.c2,
                "max_linesearch": self.max_linesearch}


@dataclass
class OptimizeResult:
    x: np.ndarray
    f: float
    grad: np.ndarray
    iterations: int
    n_evals: int
    status: str
    history_f: list = field(default_factory=list)
    history_gnorm: list = field(default_factory=list)

    @property
    def converged(self):
        return self.status == CONVERGED


def _two_loop(g, pairs, precondition):
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * (s @ q)
        q -= a * y
        alphas.append(a)
    s, y, _ = pairs[-1]
    hy = precondition(y)
    q = precondition(q) * ((s @ y) / (y @ hy))
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return -q


def _weak_wolfe(fun, x, f0, g0, d, t, c1, c2, max_steps):
    """Bisection/expansion search for a step satisfying the weak Wolfe conditions.

    Returns ``(t, f, g, n_evals, ok)``; when ``ok`` is false the best trial
    point seen (possibly ``t=0``) is returned.
    """
    slope = g0 @ d
    lo, hi = 0.0, math.inf
    best = (0.0, f0, g0)
    for n in range(1, max_steps + 1):
        try:
            ft, gt = fun(x + t * d)
            if not np.isfinite(ft) or not np.all(np.isfinite(gt)):
                ft = math.inf
        except (DegenerateCurve, ZeroEdge, FloatingPointError):
            ft, gt = math.inf, None
        if ft < best[1]:
            best = (t, ft, gt)
        if ft > f0 + c1 * t * slope:
            hi = t
        elif gt @ d < c2 * slope:
            lo = t
        else:
            return t, ft, gt, n, True
        t = 0.5 * (lo + hi) if hi < math.inf else 2.0 * lo
    return best[0], best[1], best[2], max_steps, False


def lbfgs_minimize(fun, x0, settings=None, precondition=None, g_ref=None,
                   callback=None):
    """Minimize ``fun`` (returning value and gradient) from ``x0``.

    ``precondition`` applies an approximate inverse Hessian (symmetric
    positive definite); it seeds the two-loop recursion in place of the
    identity.  Stops when the gradient norm falls to ``settings.g_tol`` times
    ``g_ref`` (default: the initial gradient norm), when an iteration reduces
    ``fun`` by less than ``settings.f_tol`` relative, after
    ``settings.max_iterations`` iterations, or when the line search fails.
    Every accepted step strictly decreases ``fun``.
    """
    s = settings or OptimizerSettings()
    if precondition is None:
        precondition = np.copy
    x = np.array(x0, dtype=float)
    if not np.all(np.isfinite(x)):
        raise NonFiniteValue("starting point is not finite")
    f, g = fun(x)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise NonFiniteValue(f"objective is not finite at the starting point (f={f})")
    n_evals = 1
    gnorm = float(np.linalg.norm(g))
    tol = s.g_tol * (gnorm if g_ref is None else g_ref)
    hist_f, hist_g = [float(f)], [gnorm]
    pairs = deque(maxlen=s.memory)
    status = MAX_ITERATIONS
    it = 0
    while True:
        if gnorm <= tol or gnorm == 0.0:
            status = CONVERGED
            break
        if it >= s.max_iterations:
            break
        if pairs:
            d = _two_loop(g, pairs, precondition)
            t0 = 1.0
        if not pairs or g @ d >= 0:
            # first step, or descent lost through a poor curvature pair
            pairs.clear()
            d = -precondition(g)
            t0 = min(1.0, 1.0 / np.linalg.norm(d))
        t, f_new, g_new, n, ok = _weak_wolfe(fun, x, f, g, d, t0, s.c1, s.c2,
                                             s.max_linesearch)
        n_evals += n
        if not ok and not (t > 0 and f_new < f):
            status = LINESEARCH_FAILED
            break
        stalled = (f - f_new) <= s.f_tol * max(abs(f), abs(f_new), 1.0)
        step = t * d
        x = x + step
        y = g_new - g
        sy = step @ y
        if sy > 1e-12 * np.linalg.norm(step) * np.linalg.norm(y):
            pairs.append((step, y, 1.0 / sy))
        f, g = f_new, g_new
        gnorm = float(np.linalg.norm(g))
        it += 1
        hist_f.append(float(f))
        hist_g.append(gnorm)
        if callback is not None:
            callback(x, f, g)
        if stalled:
            # decrease at the level of rounding error: no further progress
            status = CONVERGED
            break
        if not ok:
            status = LINESEARCH_FAILED
            break
    return OptimizeResult(x, float(f), g, it, n_evals, status, hist_f, hist_g)
