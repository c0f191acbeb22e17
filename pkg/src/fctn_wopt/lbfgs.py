"""Limited-memory BFGS with a strong Wolfe line search.

The objective is supplied as a single callable ``fun(x) -> (f, g)`` over flat
float64 vectors.
"""
from __future__ import annotations

import math
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

Objective = Callable[[np.ndarray], "tuple[float, np.ndarray]"]

GRAD_CONVERGED = "grad-converged"
OBJ_CONVERGED = "obj-converged"
MAX_ITERS = "max-iters"
LINESEARCH_FAILED = "linesearch-failed"
STOPPED = "stopped-by-callback"


class NotDescentError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


@dataclass
class LbfgsOptions:
    memory: int = 10
    max_iters: int = 200
    grad_tol: float = 1e-8
    rel_obj_tol: float = 1e-12
    wolfe_c1: float = 1e-4
    wolfe_c2: float = 0.9
    max_linesearch_steps: int = 20

    def __post_init__(self):
        if not 0 < self.wolfe_c1 < self.wolfe_c2 < 1:
            raise ValueError("need 0 < c1 < c2 < 1")
        if self.memory < 1:
            raise ValueError("memory must be >= 1")
        if self.grad_tol <= 0 or self.rel_obj_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iters < 0 or self.max_linesearch_steps < 1:
            raise ValueError("iteration limits must be positive")


@dataclass
class IterTrace:
    iter: int
    objective: float
    grad_inf_norm: float
    step_length: float
    elapsed: float
    n_evals: int = 0


@dataclass
class LineSearchResult:
    alpha: float
    f: float
    g: Optional[np.ndarray]
    n_evals: int
    status: str  # "wolfe", "armijo" or "failed"

    @property
    def ok(self) -> bool:
        return self.status != "failed"


@dataclass
class MinimizeResult:
    x: np.ndarray
    f: float
    g: np.ndarray
    trace: list[IterTrace] = field(default_factory=list)
    status: str = MAX_ITERS
    n_evals: int = 0

    @property
    def n_iters(self) -> int:
        return len(self.trace) - 1


def _finite(f, g) -> bool:
    return math.isfinite(f) and bool(np.all(np.isfinite(g)))


def _cubic_min(a, fa, da, b, fb, db) -> Optional[float]:
    """Minimizer of the cubic matching values and slopes at ``a`` and ``b``."""
    with np.errstate(all="ignore"):
        d1 = da + db - 3.0 * (fa - fb) / (a - b)
        disc = d1 * d1 - da * db
        if not disc >= 0:
            return None
        d2 = math.copysign(math.sqrt(disc), b - a)
        denom = db - da + 2.0 * d2
        if denom == 0:
            return None
        x = b - (b - a) * (db + d2 - d1) / denom
    return x if math.isfinite(x) else None


def line_search(
    fun: Objective,
    x: np.ndarray,
    direction: np.ndarray,
    f0: float,
    g0: np.ndarray,
    opts: LbfgsOptions,
    alpha0: float = 1.0,
) -> LineSearchResult:
    """Find a step along ``direction`` satisfying the strong Wolfe conditions.

    Bracketing by step doubling, then zoom by safeguarded cubic
    interpolation. A trial point whose objective or gradient is not finite is
    treated as overshooting. If the step budget runs out, the best trial that
    satisfied the sufficient-decrease condition (with strict decrease) is
    returned with status ``"armijo"``; otherwise the status is ``"failed"``.
    """
    dphi0 = float(g0 @ direction)
    if not dphi0 < 0:
        raise NotDescentError(f"direction is not a descent direction (g'd = {dphi0})")
    c1, c2 = opts.wolfe_c1, opts.wolfe_c2
    budget = opts.max_linesearch_steps
    n_evals = 0
    best: Optional[tuple] = None

    def phi(a):
        nonlocal n_evals, best
        n_evals += 1
        f, g = fun(x + a * direction)
        f = float(f)
        if not _finite(f, g):
            return None
        dphi = float(g @ direction)
        if f <= f0 + c1 * a * dphi0 and f < f0 and (best is None or f < best[1]):
            best = (a, f, g)
        return f, g, dphi

    def armijo(a, f):
        return f <= f0 + c1 * a * dphi0 and f < f0

    def done(status, a=None, f=None, g=None):
        if status == "wolfe":
            return LineSearchResult(a, f, g, n_evals, "wolfe")
        if best is not None:
            return LineSearchResult(best[0], best[1], best[2], n_evals, "armijo")
        return LineSearchResult(0.0, f0, None, n_evals, "failed")

    def zoom(lo, hi):
        # lo: (a, f, dphi) satisfying sufficient decrease; hi: (a, f, dphi) or (a, None, None)
        while n_evals < budget:
            a_lo, f_lo, d_lo = lo
            a_hi, f_hi, d_hi = hi
            width = a_hi - a_lo
            if abs(width) <= 1e-16 * max(abs(a_lo), abs(a_hi), 1e-300):
                break
            a = None
            if f_hi is not None:
                a = _cubic_min(a_lo, f_lo, d_lo, a_hi, f_hi, d_hi)
            left, right = sorted((a_lo + 0.1 * width, a_hi - 0.1 * width))
            if a is None or not left <= a <= right:
                a = a_lo + 0.5 * width
            trial = phi(a)
            if trial is None:
                hi = (a, None, None)
                continue
            f, g, dphi = trial
            if not armijo(a, f) or f >= f_lo:
                hi = (a, f, dphi)
                continue
            if abs(dphi) <= -c2 * dphi0:
                return done("wolfe", a, f, g)
            if dphi * width >= 0:
                hi = lo
            lo = (a, f, dphi)
        return done("budget")

    prev = (0.0, f0, dphi0)
    a = alpha0
    first = True
    while n_evals < budget:
        trial = phi(a)
        if trial is None:
            # overshoot into non-finite territory: back off toward the last good step
            a = prev[0] + 0.5 * (a - prev[0])
            continue
        f, g, dphi = trial
        if not armijo(a, f) or (not first and f >= prev[1]):
            return zoom(prev, (a, f, dphi))
        if abs(dphi) <= -c2 * dphi0:
            return done("wolfe", a, f, g)
        if dphi >= 0:
            return zoom((a, f, dphi), prev)
        prev = (a, f, dphi)
        a = 2.0 * a
        first = False
    return done("budget")


def _backtrack(fun, x, direction, f0, g0, opts, alpha0=1.0) -> LineSearchResult:
    """Armijo-only backtracking by halving."""
    dphi0 = float(g0 @ direction)
    a = alpha0
    for i in range(1, 61):
        f, g = fun(x + a * direction)
        f = float(f)
        if _finite(f, g) and f <= f0 + opts.wolfe_c1 * a * dphi0 and f < f0:
            return LineSearchResult(a, f, g, i, "armijo")
        a *= 0.5
    return LineSearchResult(0.0, f0, None, 60, "failed")


def _two_loop(g: np.ndarray, history) -> np.ndarray:
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(history):
        a = rho * (s @ q)
        alphas.append(a)
        q -= a * y
    s, y, _ = history[-1]
    q *= (s @ y) / (y @ y)
    for (s, y, rho), a in zip(history, reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return -q


def minimize(
    fun: Objective,
    x0: np.ndarray,
    opts: Optional[LbfgsOptions] = None,
    callback: Optional[Callable[[IterTrace, np.ndarray, float], bool]] = None,
) -> MinimizeResult:
    """Minimize ``fun`` from ``x0``.

    ``callback(trace_entry, x, f)`` is called after every accepted step; a
    truthy return value stops the run with status ``"stopped-by-callback"``.
    """
    opts = opts or LbfgsOptions()
    t_start = time.perf_counter()
    x = np.array(x0, dtype=np.float64)
    f, g = fun(x)
    f = float(f)
    if not _finite(f, g):
        raise NonFiniteError("objective or gradient is not finite at the starting point")
    n_evals = 1
    trace = [IterTrace(0, f, float(np.max(np.abs(g), initial=0.0)), 0.0, time.perf_counter() - t_start, 1)]
    result = MinimizeResult(x, f, g, trace, MAX_ITERS, n_evals)
    if trace[0].grad_inf_norm < opts.grad_tol:
        result.status = GRAD_CONVERGED
        return result

    history: deque = deque(maxlen=opts.memory)
    for it in range(1, opts.max_iters + 1):
        t_iter = time.perf_counter()
        if history:
            d = _two_loop(g, history)
            if not float(g @ d) < 0:
                history.clear()
        if not history:
            d = -g / np.linalg.norm(g)
        ls = line_search(fun, x, d, f, g, opts)
        n_evals += ls.n_evals
        if not ls.ok:
            history.clear()
            d = -g / np.linalg.norm(g)
            ls = _backtrack(fun, x, d, f, g, opts)
            n_evals += ls.n_evals
            if not ls.ok:
                result.status = LINESEARCH_FAILED
                break
        x_new = x + ls.alpha * d
        s, y = x_new - x, ls.g - g
        sy = float(s @ y)
        if sy > 1e-10 * np.linalg.norm(s) * np.linalg.norm(y):
            history.append((s, y, 1.0 / sy))
        f_old = f
        x, f, g = x_new, ls.f, ls.g
        entry = IterTrace(it, f, float(np.max(np.abs(g))), ls.alpha,
                          time.perf_counter() - t_iter, ls.n_evals)
        trace.append(entry)
        result.x, result.f, result.g = x, f, g
        if entry.grad_inf_norm < opts.grad_tol:
            result.status = GRAD_CONVERGED
            break
        if abs(f_old - f) <= opts.rel_obj_tol * max(abs(f_old), abs(f)):
            result.status = OBJ_CONVERGED
            break
        if callback is not None and callback(entry, x, f):
            result.status = STOPPED
            break
    result.n_evals = n_evals
    return result
