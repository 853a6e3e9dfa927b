"""Classical optimizers for variational parameters.

All methods share one contract: the cost function is wrapped in an
:class:`Objective` that counts calls, records a trace and refuses to
evaluate past ``Budget.max_evals`` (raising :class:`BudgetExhausted`, which
the methods turn into termination reason ``"budget"``). So no method ever
exceeds its budget, and the reported best point is always one that was
actually evaluated.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

GOLDEN = 0.5 * (3 - math.sqrt(5))


class BudgetExhausted(Exception):
    pass


class OptimizerError(ValueError):
    pass


@dataclass(frozen=True)
class Budget:
    max_evals: int = 10000
    target_tol: float = 1e-8
    max_stall: int = 200

    def __post_init__(self):
        if self.max_evals < 1 or self.target_tol <= 0 or self.max_stall < 1:
            raise OptimizerError("budget values must be positive")


class Objective:
    """Counting, tracing wrapper around ``fn(params) -> float``."""

    def __init__(self, fn: Callable[[np.ndarray], float], max_evals: int | None = None,
                 sink: Callable[[int, float, float], None] | None = None):
        self.fn = fn
        self.max_evals = max_evals
        self.sink = sink
        self.evals = 0
        self.costs: list[float] = []
        self.times: list[float] = []
        self.best_cost = math.inf
        self.best_x: np.ndarray | None = None
        self._t0 = time.perf_counter()

    def __call__(self, x) -> float:
        if self.max_evals is not None and self.evals >= self.max_evals:
            raise BudgetExhausted
        x = np.array(x, dtype=float)
        cost = float(self.fn(x))
        self.evals += 1
        ms = (time.perf_counter() - self._t0) * 1e3
        self.costs.append(cost)
        self.times.append(ms)
        if cost < self.best_cost:
            self.best_cost, self.best_x = cost, x
        if self.sink is not None:
            self.sink(self.evals - 1, cost, ms)
        return cost


@dataclass
class OptResult:
    x: np.ndarray
    cost: float
    evals: int
    reason: str  # converged | budget | stalled
    trace: np.ndarray = field(repr=False)
    times: np.ndarray = field(repr=False, default=None)
    last_x: np.ndarray | None = field(repr=False, default=None)  # final iterate, maybe unevaluated

    def running_best(self) -> np.ndarray:
        return np.minimum.accumulate(self.trace)


def _result(obj: Objective, reason: str, last=None) -> OptResult:
    if obj.best_x is None:
        raise OptimizerError("optimizer finished without a single evaluation")
    last = obj.best_x if last is None else np.array(last, dtype=float)
    return OptResult(obj.best_x.copy(), obj.best_cost, obj.evals, reason,
                     np.array(obj.costs), np.array(obj.times), last.copy())


def write_trace_csv(path, result: OptResult, zero_time: bool = False) -> None:
    """Columns ``eval_index, cost, wall_time_ms``."""
    times = result.times if result.times is not None else np.zeros(result.trace.size)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["eval_index", "cost", "wall_time_ms"])
        for k, (c, t) in enumerate(zip(result.trace, times)):
            w.writerow([k, repr(float(c)), "0" if zero_time else f"{t:.3f}"])


# -- Nelder-Mead -------------------------------------------------------------------


def nelder_mead(obj: Objective, x0, budget: Budget, step: float = 0.1) -> OptResult:
    """Downhill simplex with reflection 1, expansion 2, contraction 0.5, shrink 0.5.

    Converged when both the spread of simplex values and the simplex
    diameter are below ``target_tol``.
    """
    x0 = np.asarray(x0, dtype=float)
    d = x0.size
    if d < 1:
        raise OptimizerError("need at least one parameter")
    tol = budget.target_tol
    try:
        sim = [x0.copy()]
        for k in range(d):
            v = x0.copy()
            v[k] += step if v[k] == 0 else step * max(1.0, abs(v[k]))
            sim.append(v)
        sim = np.array(sim)
        f = np.array([obj(v) for v in sim])
        stall, best = 0, f.min()
        while True:
            order = np.argsort(f, kind="stable")
            sim, f = sim[order], f[order]
            if f[-1] - f[0] <= tol and np.abs(sim[1:] - sim[0]).max() <= tol:
                return _result(obj, "converged")
            if stall >= budget.max_stall:
                return _result(obj, "stalled")
            centroid = sim[:-1].mean(axis=0)
            xr = centroid + (centroid - sim[-1])
            fr = obj(xr)
            if fr < f[0]:
                xe = centroid + 2 * (centroid - sim[-1])
                fe = obj(xe)
                sim[-1], f[-1] = (xe, fe) if fe < fr else (xr, fr)
            elif fr < f[-2]:
                sim[-1], f[-1] = xr, fr
            else:
                if fr < f[-1]:
                    xc = centroid + 0.5 * (xr - centroid)
                    fc = obj(xc)
                    accept = fc <= fr
                else:
                    xc = centroid + 0.5 * (sim[-1] - centroid)
                    fc = obj(xc)
                    accept = fc < f[-1]
                if accept:
                    sim[-1], f[-1] = xc, fc
                else:
                    for k in range(1, d + 1):
                        sim[k] = sim[0] + 0.5 * (sim[k] - sim[0])
                        f[k] = obj(sim[k])
            if f.min() < best - tol:
                best, stall = f.min(), 0
            else:
                stall += 1
    except BudgetExhausted:
        return _result(obj, "budget")


# -- Powell ----------------------------------------------------------------------------


def _bracket(f, a: float, b: float, fa: float, fb: float, grow_limit: float = 110.0,
             max_steps: int = 50):
    """Downhill bracketing ``a < b < c`` (or reversed) with ``f(b) <= f(a), f(c)``."""
    if fb > fa:
        a, b, fa, fb = b, a, fb, fa
    c = b + 1.618034 * (b - a)
    fc = f(c)
    steps = 0
    while fb > fc and steps < max_steps:
        steps += 1
        r = (b - a) * (fb - fc)
        s = (b - c) * (fb - fa)
        denom = 2 * math.copysign(max(abs(s - r), 1e-21), s - r)
        u = b - ((b - c) * s - (b - a) * r) / denom
        ulim = b + grow_limit * (c - b)
        if (b - u) * (u - c) > 0:
            fu = f(u)
            if fu < fc:
                return b, u, c, fb, fu, fc
            if fu > fb:
                return a, b, u, fa, fb, fu
            u = c + 1.618034 * (c - b)
            fu = f(u)
        elif (c - u) * (u - ulim) > 0:
            fu = f(u)
            if fu < fc:
                b, c, u = c, u, u + 1.618034 * (u - c)
                fb, fc, fu = fc, fu, f(u)
        elif (u - ulim) * (ulim - c) >= 0:
            u = ulim
            fu = f(u)
        else:
            u = c + 1.618034 * (c - b)
            fu = f(u)
        a, b, c = b, c, u
        fa, fb, fc = fb, fc, fu
    return a, b, c, fa, fb, fc


def _brent(f, a: float, b: float, c: float, fb: float, tol: float, max_iter: int = 100):
    """Brent's parabolic/golden-section minimisation inside a bracket."""
    lo, hi = min(a, c), max(a, c)
    x = w = v = b
    fx = fw = fv = fb
    d = e = 0.0
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        tol1 = tol * abs(x) + 1e-11
        tol2 = 2 * tol1
        if abs(x - mid) <= tol2 - 0.5 * (hi - lo):
            break
        if abs(e) > tol1:
            r = (x - w) * (fx - fv)
            q = (x - v) * (fx - fw)
            p = (x - v) * q - (x - w) * r
            q = 2 * (q - r)
            if q > 0:
                p = -p
            q = abs(q)
            if abs(p) < abs(0.5 * q * e) and q * (lo - x) < p < q * (hi - x):
                e, d = d, p / q
                u = x + d
                if u - lo < tol2 or hi - u < tol2:
                    d = math.copysign(tol1, mid - x)
            else:
                e = (hi - x) if x < mid else (lo - x)
                d = GOLDEN * e
        else:
            e = (hi - x) if x < mid else (lo - x)
            d = GOLDEN * e
        u = x + (d if abs(d) >= tol1 else math.copysign(tol1, d))
        fu = f(u)
        if fu <= fx:
            if u < x:
                hi = x
            else:
                lo = x
            v, w, x = w, x, u
            fv, fw, fx = fw, fx, fu
        else:
            if u < x:
                lo = u
            else:
                hi = u
            if fu <= fw or w == x:
                v, w, fv, fw = w, u, fw, fu
            elif fu <= fv or v == x or v == w:
                v, fv = u, fu
    return x, fx


def _line_min(obj, x, fx, direction, tol):
    f = lambda t: obj(x + t * direction)  # noqa: E731
    a, b, c, fa, fb, fc = _bracket(f, 0.0, 1.0, fx, f(1.0))
    if fb > min(fa, fc):  # bracketing gave up; keep the best probe
        t, ft = min(((a, fa), (b, fb), (c, fc)), key=lambda p: p[1])
    else:
        t, ft = _brent(f, a, b, c, fb, tol)
    if ft > fx:
        return 0.0, fx
    return t, ft


def powell(obj: Objective, x0, budget: Budget, line_tol: float = 1e-4) -> OptResult:
    """Powell's conjugate-direction method with Brent line searches.

    After each cycle the direction of largest decrease is replaced by the
    cycle's net displacement unless the extrapolation test rejects it.
    Converged when a cycle lowers the cost by less than ``target_tol``
    relative to its magnitude.
    """
    x = np.asarray(x0, dtype=float).copy()
    d = x.size
    if d < 1:
        raise OptimizerError("need at least one parameter")
    dirs = np.eye(d)
    try:
        fx = obj(x)
        stall, best = 0, fx
        while True:
            x_start, f_start = x.copy(), fx
            big_k, big_drop = 0, 0.0
            for k in range(d):
                f_prev = fx
                t, fx = _line_min(obj, x, fx, dirs[k], line_tol)
                x = x + t * dirs[k]
                if f_prev - fx > big_drop:
                    big_k, big_drop = k, f_prev - fx
            if 2 * (f_start - fx) <= budget.target_tol * (abs(f_start) + abs(fx)) + 1e-20:
                return _result(obj, "converged")
            if fx < best - budget.target_tol:
                best, stall = fx, 0
            else:
                stall += 1
                if stall >= budget.max_stall:
                    return _result(obj, "stalled")
            delta = x - x_start
            f_ext = obj(x + delta)
            if f_ext < f_start:
                t1 = 2 * (f_start - 2 * fx + f_ext) * (f_start - fx - big_drop) ** 2
                t2 = big_drop * (f_start - f_ext) ** 2
                if t1 < t2:
                    t, fx = _line_min(obj, x, fx, delta, line_tol)
                    x = x + t * delta
                    dirs[big_k] = dirs[-1]
                    dirs[-1] = delta
    except BudgetExhausted:
        return _result(obj, "budget")


# -- SPSA -------------------------------------------------------------------------------


@dataclass(frozen=True)
class SpsaGains:
    a: float = 0.2
    c: float = 0.1
    A: float = 10.0
    alpha: float = 0.602
    gamma: float = 0.101

    def __post_init__(self):
        if not self.c > 1e-12:
            raise OptimizerError("SPSA perturbation c must be positive")
        if self.a <= 0 or self.A < 0:
            raise OptimizerError("SPSA gains a must be positive and A nonnegative")


def spsa(obj: Objective, x0, budget: Budget, seed=0, gains: SpsaGains | None = None,
         calibrate: bool = False, target_step: float = 0.2) -> OptResult:
    """Simultaneous-perturbation stochastic approximation.

    ``a_k = a / (k + 1 + A)^alpha`` and ``c_k = c / (k + 1)^gamma``; every
    iteration costs two evaluations at ``x +- c_k * delta`` with Rademacher
    ``delta``. With ``calibrate`` the gain ``a`` is chosen from a few
    initial gradient estimates so the first step has size ``target_step``.
    """
    g = gains or SpsaGains()
    x = np.asarray(x0, dtype=float).copy()
    if x.size < 1:
        raise OptimizerError("need at least one parameter")
    rng = np.random.default_rng(seed)
    a = g.a
    try:
        if calibrate:
            mags = []
            for _ in range(min(5, max(1, budget.max_evals // 20))):
                delta = rng.choice([-1.0, 1.0], size=x.size)
                diff = obj(x + g.c * delta) - obj(x - g.c * delta)
                mags.append(abs(diff) / (2 * g.c))
            mean = float(np.mean(mags))
            if mean > 0:
                a = target_step * (g.A + 1) ** g.alpha / mean
        k, stall, best = 0, 0, obj.best_cost
        while True:
            ak = a / (k + 1 + g.A) ** g.alpha
            ck = g.c / (k + 1) ** g.gamma
            delta = rng.choice([-1.0, 1.0], size=x.size)
            fp = obj(x + ck * delta)
            fm = obj(x - ck * delta)
            x = x - ak * (fp - fm) / (2 * ck) * delta
            k += 1
            if obj.best_cost < best - budget.target_tol:
                best, stall = obj.best_cost, 0
            else:
                stall += 1
                if stall >= budget.max_stall:
                    return _result(obj, "stalled")
    except BudgetExhausted:
        return _result(obj, "budget")


# -- NFT ----------------------------------------------------------------------------------


def nft(obj: Objective, x0, budget: Budget, reset_interval: int | None = None) -> OptResult:
    """Sequential minimal optimisation for rotation-parameterised costs.

    For each parameter the cost is taken to be ``a + b cos(theta - phi)``;
    three values (current, ``+pi/2``, ``-pi/2``) determine it and the
    parameter jumps to the exact minimiser. The value at the jump target is
    predicted rather than measured, so later updates cost two evaluations;
    a fresh evaluation is taken at the start of every sweep (or every
    ``reset_interval`` updates). Costs that are not single sinusoids in a
    parameter (e.g. controlled rotations) are fitted approximately; this is
    not detected. Converged when a full sweep leaves every parameter in
    place (to ``target_tol``); otherwise it runs until the budget is spent.
    """
    x = np.asarray(x0, dtype=float).copy()
    d = x.size
    if d < 1:
        raise OptimizerError("need at least one parameter")
    reset = reset_interval or d
    half = math.pi / 2
    try:
        z0 = obj(x)
        count = 0
        stall, best = 0, z0
        while True:
            x_start = x.copy()
            for k in range(d):
                if count and count % reset == 0:
                    z0 = obj(x)
                e = np.zeros(d)
                e[k] = half
                z1 = obj(x + e)
                z3 = obj(x - e)
                a = 0.5 * (z1 + z3)
                B = z0 - a
                C = 0.5 * (z1 - z3)
                R = math.hypot(B, C)
                if R > 1e-14 * max(1.0, abs(a)):  # flat direction: leave it alone
                    x[k] = _wrap(x[k] + math.atan2(C, B) + math.pi)
                    z0 = a - R
                count += 1
            if np.abs(_wrap(x - x_start)).max() < budget.target_tol:
                obj(x)
                return _result(obj, "converged", x)
            if obj.best_cost < best - budget.target_tol:
                best, stall = obj.best_cost, 0
            else:
                stall += 1
                if stall >= budget.max_stall:
                    return _result(obj, "stalled", x)
    except BudgetExhausted:
        return _result(obj, "budget", x)


def _wrap(t):
    """Angle(s) mapped into ``[-pi, pi)``."""
    return (t + math.pi) % (2 * math.pi) - math.pi


# -- conjugate gradient ---------------------------------------------------------------------


def fd_gradient(obj, x, h: float) -> np.ndarray:
    """Central differences; ``2 * dim`` evaluations."""
    g = np.empty(x.size)
    for k in range(x.size):
        e = np.zeros(x.size)
        e[k] = h
        g[k] = (obj(x + e) - obj(x - e)) / (2 * h)
    return g


def _armijo(obj, x, fx, g, direction, t0: float = 1.0, shrink: float = 0.5,
            c1: float = 1e-4, max_steps: int = 30):
    slope = float(g @ direction)
    t = t0
    for _ in range(max_steps):
        ft = obj(x + t * direction)
        if ft <= fx + c1 * t * slope:
            return t, ft
        t *= shrink
    return 0.0, fx


def cg_fd(obj: Objective, x0, budget: Budget, fd_step: float = 1e-4,
          grad_tol: float = 1e-6) -> OptResult:
    """Polak-Ribiere conjugate gradient on central finite-difference gradients.

    Backtracking (Armijo) line search along the conjugate direction; if it
    fails to decrease the cost, the step is retried along steepest descent
    and the recurrence restarts. Converged when the gradient norm drops
    below ``grad_tol``.
    """
    if fd_step <= 0:
        raise OptimizerError("fd_step must be positive")
    x = np.asarray(x0, dtype=float).copy()
    if x.size < 1:
        raise OptimizerError("need at least one parameter")
    try:
        fx = obj(x)
        g = fd_gradient(obj, x, fd_step)
        direction = -g
        t_prev = 1.0
        stall = 0
        while True:
            if np.linalg.norm(g) < grad_tol:
                return _result(obj, "converged")
            if g @ direction >= 0:
                direction = -g
            t0 = min(1.0, 2 * t_prev) if t_prev > 0 else 1.0
            t, f_new = _armijo(obj, x, fx, g, direction, t0)
            if t == 0.0:
                direction = -g
                t, f_new = _armijo(obj, x, fx, g, direction, 1.0)
                if t == 0.0:
                    stall += 1
                    if stall >= 3:
                        return _result(obj, "stalled")
                    continue
            stall = 0 if fx - f_new > budget.target_tol else stall + 1
            if stall >= budget.max_stall:
                return _result(obj, "stalled")
            x = x + t * direction
            fx, t_prev = f_new, t
            g_new = fd_gradient(obj, x, fd_step)
            beta = max(0.0, float(g_new @ (g_new - g)) / max(float(g @ g), 1e-300))
            direction = -g_new + beta * direction
            g = g_new
    except BudgetExhausted:
        return _result(obj, "budget")


# -- registry ---------------------------------------------------------------------------------

OUT_OF_SCOPE = ("cobyla", "slsqp", "umda")
OPTIMIZERS = ("nelder-mead", "powell", "spsa", "nft", "cg")


def run_optimizer(name: str, fn, x0, budget: Budget | None = None, seed=0,
                  sink=None, **options) -> OptResult:
    """Run a named optimizer on ``fn`` with a fresh counting objective."""
    budget = budget or Budget()
    key = name.lower()
    if key not in OPTIMIZERS:
        raise OptimizerError(
            f"unknown optimizer {name!r}; available: {', '.join(OPTIMIZERS)}; "
            f"not implemented (out of scope): {', '.join(OUT_OF_SCOPE)}"
        )
    obj = fn if isinstance(fn, Objective) else Objective(fn, budget.max_evals, sink)
    if key == "nelder-mead":
        return nelder_mead(obj, x0, budget, **options)
    if key == "powell":
        return powell(obj, x0, budget, **options)
    if key == "spsa":
        return spsa(obj, x0, budget, seed=seed, **options)
    if key == "nft":
        return nft(obj, x0, budget, **options)
    return cg_fd(obj, x0, budget, **options)
