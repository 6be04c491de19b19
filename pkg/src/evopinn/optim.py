"""Full-batch L-BFGS with a strong Wolfe line search, in double precision.

One epoch is one L-BFGS iteration. Training stops early on numeric overflow
(no finite acceptable step), on a wall-time budget, or when the line search
stalls at a vanishing gradient. All state is numpy; the objective is any
callable theta -> (loss, gradient).
"""

from __future__ import annotations

import math
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, List, NamedTuple, Optional, Tuple

import numpy as np

GRAD_TOL = 1e-12


@dataclass(frozen=True)
class LbfgsConfig:
    epochs: int
    memory: int = 50
    c1: float = 1e-4
    c2: float = 0.9
    max_ls_steps: int = 25
    initial_step: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.c1 < self.c2 < 1.0:
            raise ValueError("need 0 < c1 < c2 < 1")
        if self.memory < 1:
            raise ValueError("memory must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


@dataclass
class TrainTrace:
    """Loss history (row 0 is the initial loss), bookkeeping, and status."""

    losses: List[float] = field(default_factory=list)
    status: str = "completed"  # completed | overflow | timeout | converged
    wall_time: float = 0.0
    wolfe: List[Tuple[float, float, float, float, float]] = field(default_factory=list)
    # wolfe rows: (alpha, f0, slope0, f_new, slope_new) per accepted step

    @property
    def min_loss(self) -> float:
        return min(self.losses) if self.losses else math.inf

    @property
    def epochs_run(self) -> int:
        return max(0, len(self.losses) - 1)


class LineSearchResult(NamedTuple):
    ok: bool
    alpha: float
    value: float
    slope: float
    evals: int
    saw_nonfinite: bool


def wolfe_line_search(phi: Callable[[float], Tuple[float, float]],
                      phi0: float, dphi0: float,
                      c1: float = 1e-4, c2: float = 0.9,
                      max_steps: int = 25, alpha0: float = 1.0,
                      alpha_max: float = 1e10) -> LineSearchResult:
    """Bracket-and-zoom search for a step satisfying both strong Wolfe conditions.

    phi maps a step length to (value, directional derivative). Non-finite
    trial values are treated as overshoot: the bracket shrinks toward the
    finite region. Failure (no acceptable finite step within max_steps) is
    reported in the result, not raised.
    """
    if not dphi0 < 0.0:
        raise ValueError("line search requires a descent direction (phi'(0) < 0)")
    saw_nonfinite = False
    evals = 0

    def armijo(a, f):
        return f <= phi0 + c1 * a * dphi0

    def strong(g):
        return abs(g) <= -c2 * dphi0

    lo = (0.0, phi0, dphi0)
    hi = None
    a_prev, f_prev, g_prev = 0.0, phi0, dphi0
    a = alpha0
    # bracketing phase
    while evals < max_steps:
        f_a, g_a = phi(a)
        evals += 1
        finite = math.isfinite(f_a) and math.isfinite(g_a)
        if not finite:
            saw_nonfinite = True
            lo = (a_prev, f_prev, g_prev)
            hi = (a, math.inf, math.nan)
            break
        if not armijo(a, f_a) or (evals > 1 and f_a >= f_prev):
            lo = (a_prev, f_prev, g_prev)
            hi = (a, f_a, g_a)
            break
        if strong(g_a):
            return LineSearchResult(True, a, f_a, g_a, evals, saw_nonfinite)
        if g_a >= 0.0:
            lo = (a, f_a, g_a)
            hi = (a_prev, f_prev, g_prev)
            break
        a_prev, f_prev, g_prev = a, f_a, g_a
        if a >= alpha_max:
            return LineSearchResult(False, a, f_a, g_a, evals, saw_nonfinite)
        a = min(2.0 * a, alpha_max)
    if hi is None:
        return LineSearchResult(False, a_prev, f_prev, g_prev, evals, saw_nonfinite)

    # zoom phase
    while evals < max_steps:
        a_lo, f_lo, g_lo = lo
        a_hi, f_hi, g_hi = hi
        if abs(a_hi - a_lo) <= 1e-16 * max(1.0, abs(a_lo)):
            break
        t = _interpolate(a_lo, f_lo, g_lo, a_hi, f_hi, g_hi)
        f_t, g_t = phi(t)
        evals += 1
        if not (math.isfinite(f_t) and math.isfinite(g_t)):
            saw_nonfinite = True
            hi = (t, math.inf, math.nan)
            continue
        if not armijo(t, f_t) or f_t >= f_lo:
            hi = (t, f_t, g_t)
            continue
        if strong(g_t):
            return LineSearchResult(True, t, f_t, g_t, evals, saw_nonfinite)
        if g_t * (a_hi - a_lo) >= 0.0:
            hi = lo
        lo = (t, f_t, g_t)
    a_lo, f_lo, g_lo = lo
    if a_lo > 0.0 and armijo(a_lo, f_lo) and strong(g_lo):
        return LineSearchResult(True, a_lo, f_lo, g_lo, evals, saw_nonfinite)
    return LineSearchResult(False, a_lo, f_lo, g_lo, evals, saw_nonfinite)


def _interpolate(a_lo, f_lo, g_lo, a_hi, f_hi, g_hi):
    """Cubic minimizer inside the bracket; bisection when untrustworthy."""
    mid = 0.5 * (a_lo + a_hi)
    if not (math.isfinite(f_hi) and math.isfinite(g_hi)):
        return mid
    d1 = g_lo + g_hi - 3.0 * (f_lo - f_hi) / (a_lo - a_hi)
    disc = d1 * d1 - g_lo * g_hi
    if disc < 0.0:
        return mid
    d2 = math.copysign(math.sqrt(disc), a_hi - a_lo)
    t = a_hi - (a_hi - a_lo) * (g_hi + d2 - d1) / (g_hi - g_lo + 2.0 * d2)
    span = abs(a_hi - a_lo)
    lo_b, hi_b = min(a_lo, a_hi), max(a_lo, a_hi)
    if not math.isfinite(t) or t <= lo_b + 0.02 * span or t >= hi_b - 0.02 * span:
        return mid
    return t


def _two_loop(memory, g):
    q = g.copy()
    alphas = []
    for s, y, sy in reversed(memory):
        a = (s @ q) / sy
        alphas.append(a)
        q -= a * y
    s, y, sy = memory[-1]
    q *= sy / (y @ y)
    for (s, y, sy), a in zip(memory, reversed(alphas)):
        b = (y @ q) / sy
        q += (a - b) * s
    return -q


def minimize(objective, theta0, cfg: LbfgsConfig,
             time_limit: Optional[float] = None,
             callback=None) -> Tuple[np.ndarray, TrainTrace]:
    """Run cfg.epochs full-batch L-BFGS iterations from theta0.

    objective: theta -> (loss, gradient) with gradient None allowed when the
    loss is non-finite. Statuses land in the trace, never as exceptions.
    """
    start = time.perf_counter()
    theta = np.asarray(theta0, dtype=float).copy()
    trace = TrainTrace()

    def finite_state(f, g):
        return math.isfinite(f) and g is not None and bool(np.isfinite(g).all())

    f, g = objective(theta)
    if not finite_state(f, g):
        trace.status = "overflow"
        trace.wall_time = time.perf_counter() - start
        return theta, trace
    trace.losses.append(float(f))

    memory = deque(maxlen=cfg.memory)
    for epoch in range(1, cfg.epochs + 1):
        if time_limit is not None and time.perf_counter() - start > time_limit:
            trace.status = "timeout"
            break
        gnorm = float(np.linalg.norm(g))
        if gnorm < GRAD_TOL:
            trace.status = "converged"
            break

        p = _two_loop(memory, g) if memory else -g
        dphi0 = float(g @ p)
        if dphi0 >= 0.0:  # stale curvature; restart from steepest descent
            memory.clear()
            p = -g
            dphi0 = -gnorm * gnorm

        cache = {}

        def phi(alpha):
            th = theta + alpha * p
            fv, gv = objective(th)
            cache[alpha] = (th, fv, gv)
            if not finite_state(fv, gv):
                return math.inf, math.nan
            return float(fv), float(gv @ p)

        alpha0 = cfg.initial_step if memory else min(cfg.initial_step, 1.0 / max(1.0, gnorm))
        result = wolfe_line_search(phi, float(f), dphi0, cfg.c1, cfg.c2,
                                   cfg.max_ls_steps, alpha0)
        if not result.ok and memory:
            memory.clear()
            p = -g
            dphi0 = -gnorm * gnorm
            cache.clear()
            retry = wolfe_line_search(phi, float(f), dphi0, cfg.c1, cfg.c2,
                                      cfg.max_ls_steps, min(cfg.initial_step, 1.0 / max(1.0, gnorm)))
            result = retry._replace(saw_nonfinite=result.saw_nonfinite or retry.saw_nonfinite)
        if not result.ok:
            trace.status = "overflow" if result.saw_nonfinite else "converged"
            break

        theta_new, f_new, g_new = cache[result.alpha]
        s = theta_new - theta
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-10 * float(np.linalg.norm(s)) * float(np.linalg.norm(y)):
            memory.append((s, y, sy))
        trace.wolfe.append((result.alpha, float(f), dphi0, result.value, result.slope))
        theta, f, g = theta_new, result.value, g_new
        trace.losses.append(float(f))
        if callback is not None:
            callback(epoch, theta, float(f))

    trace.wall_time = time.perf_counter() - start
    return theta, trace
