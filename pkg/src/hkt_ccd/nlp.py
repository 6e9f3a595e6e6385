"""Bound- and equality-constrained NLP solver (augmented Lagrangian).

Problems are posed as *maximization* of an objective subject to c(x) = 0 and
lb <= x <= ub.  Each outer iteration minimizes the augmented Lagrangian

    L_A(x) = -f(x) - y.c(x) + mu/2 |c(x)|^2

over the box with scipy's L-BFGS-B, then updates the multipliers y or
raises the penalty mu.  Stationarity is checked with y and, when that
is not enough, with a least-squares multiplier estimate at the same x.
When the iterate is feasible but stationarity stops improving, the
penalty is lowered again.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize

from . import dual as D

log = logging.getLogger(__name__)

PENALTY_INIT = 10.0
PENALTY_GROWTH = 10.0
PENALTY_MAX = 1e8
CLUSTER_TOL = 1e-3


@dataclass
class NlpProblem:
    """Maximize ``objective`` subject to ``constraints(x) == 0`` and bounds.

    ``gradient_fn`` / ``jacobian_fn`` are optional; without them the
    evaluators are differentiated with dual numbers, and with central
    finite differences if they do not accept duals.
    """

    dimension: int
    objective: Callable[[np.ndarray], float]
    lower: np.ndarray
    upper: np.ndarray
    constraints: Callable[[np.ndarray], np.ndarray] | None = None
    gradient_fn: Callable[[np.ndarray], np.ndarray] | None = None
    jacobian_fn: Callable[[np.ndarray], np.ndarray] | None = None
    fd_step: float = 1e-6
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.dimension
        self.lower = np.broadcast_to(np.asarray(self.lower, dtype=float), (n,)).copy()
        self.upper = np.broadcast_to(np.asarray(self.upper, dtype=float), (n,)).copy()
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")

    def project(self, x) -> np.ndarray:
        return np.clip(np.asarray(x, dtype=float), self.lower, self.upper)

    def eq(self, x) -> np.ndarray:
        if self.constraints is None:
            return np.zeros(0)
        return np.atleast_1d(np.asarray(self.constraints(x), dtype=float))


@dataclass
class NlpSolution:
    x: np.ndarray
    objective: float
    feasibility: float
    optimality: float
    iterations: int
    wall_time: float
    status: str  # converged | iteration-limit | failure
    multipliers: np.ndarray | None = None
    log: list = field(default_factory=list)
    message: str = ""

    @property
    def converged(self) -> bool:
        return self.status == "converged"


# -- derivatives ---------------------------------------------------------------

def _fd(fun, x, step):
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        h = step * max(1.0, abs(x[i]))
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        cols.append((np.asarray(fun(xp), dtype=float) - np.asarray(fun(xm), dtype=float)) / (2 * h))
    return np.stack(cols, axis=-1) if cols else np.zeros((0,))


def _dual_eval(fun, x):
    xd = D.Dual(x, np.eye(x.size))
    out = fun(xd)
    if isinstance(out, D.Dual):
        return out.der
    if isinstance(out, (list, tuple)) or (isinstance(out, np.ndarray) and out.dtype == object):
        # a sequence of scalar duals and constants
        items = list(np.ravel(np.asarray(out, dtype=object)))
        return np.stack([np.broadcast_to(D.derivative(o, x.size), (x.size,)) for o in items]) \
            if items else np.zeros((0, x.size))
    # no dependence on x at all
    return np.zeros(np.shape(out) + (x.size,))


def gradient(problem: NlpProblem, x) -> np.ndarray:
    """Objective gradient: provider, else dual numbers, else central FD."""
    x = np.asarray(x, dtype=float)
    if problem.gradient_fn is not None:
        return np.asarray(problem.gradient_fn(x), dtype=float)
    try:
        return np.asarray(_dual_eval(problem.objective, x), dtype=float).reshape(x.size)
    except (TypeError, ValueError, AttributeError):
        return _fd(problem.objective, x, problem.fd_step).reshape(x.size)


def jacobian(problem: NlpProblem, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if problem.constraints is None:
        return np.zeros((0, x.size))
    if problem.jacobian_fn is not None:
        return np.asarray(problem.jacobian_fn(x), dtype=float)
    try:
        return np.asarray(_dual_eval(problem.constraints, x), dtype=float).reshape(-1, x.size)
    except (TypeError, ValueError, AttributeError):
        return _fd(problem.eq, x, problem.fd_step).reshape(-1, x.size)


def projected_gradient(x, g, lower, upper) -> np.ndarray:
    """Projected step P(x - g) - x for a minimization gradient g."""
    return np.clip(x - g, lower, upper) - x


def kkt_residuals(problem: NlpProblem, x, y) -> tuple[float, float]:
    """(feasibility, optimality) at x with equality multipliers y."""
    c = problem.eq(x)
    bound = max(0.0, float(np.max(problem.lower - x, initial=0.0)), float(np.max(x - problem.upper, initial=0.0)))
    feas = max(float(np.max(np.abs(c), initial=0.0)), bound)
    g = -gradient(problem, x)
    if c.size:
        g = g - jacobian(problem, x).T @ y
    opt = float(np.max(np.abs(projected_gradient(x, g, problem.lower, problem.upper)), initial=0.0))
    return feas, opt


def least_squares_multipliers(problem: NlpProblem, x) -> np.ndarray:
    """First-order multiplier estimate: min |grad f + J^T y| over the variables off their bounds.

    The augmented-Lagrangian estimate y - mu c carries mu times the residual
    constraint noise, which at large penalties can dominate the stationarity
    measure on degenerate problems even when x is a KKT point.
    """
    g = gradient(problem, x)
    J = jacobian(problem, x)
    free = (x > problem.lower) & (x < problem.upper)
    if not free.any():
        return np.zeros(J.shape[0])
    return np.linalg.lstsq(J[:, free].T, -g[free], rcond=None)[0]


# -- solver --------------------------------------------------------------------

class _Merit:
    """Augmented Lagrangian with evaluation-failure handling."""

    def __init__(self, problem, y, mu):
        self.p, self.y, self.mu = problem, y, mu
        self.last_good = None
        self.failures = 0
        self.consecutive_failures = 0
        self.evals = 0

    def __call__(self, x):
        self.evals += 1
        p = self.p
        try:
            f = float(p.objective(x))
            g = gradient(p, x)
            c = p.eq(x)
            J = jacobian(p, x) if c.size else None
            if not (np.isfinite(f) and np.all(np.isfinite(g)) and np.all(np.isfinite(c))):
                raise FloatingPointError("non-finite evaluation")
        except Exception as exc:  # evaluator failure: make the line search back off
            self.failures += 1
            self.consecutive_failures += 1
            log.debug("evaluation failed at iterate (%s); backtracking", exc)
            if self.last_good is None:
                raise
            val, grad = self.last_good
            return abs(val) * 10.0 + 1e10, grad
        self.consecutive_failures = 0
        val = -f - self.y @ c + 0.5 * self.mu * (c @ c)
        grad = -g
        if J is not None:
            grad = grad + J.T @ (self.mu * c - self.y)
        self.last_good = (val, grad)
        return val, grad


def solve(problem: NlpProblem, x0, feas_tol: float = 1e-6, opt_tol: float = 1e-6,
          max_outer: int = 60, max_inner: int = 5000, y0=None,
          callback: Callable[[str], None] | None = None) -> NlpSolution:
    """Augmented-Lagrangian solve; see module docstring.

    The returned ``log`` holds one ``iter, objective, feas, opt, step`` line
    per outer iteration.
    """
    t0 = time.perf_counter()
    x = problem.project(np.asarray(x0, dtype=float))
    c = problem.eq(x)
    m = c.size
    y = np.zeros(m) if y0 is None else np.asarray(y0, dtype=float).copy()
    mu = PENALTY_INIT
    eta = max(feas_tol, 0.1)  # feasibility target for the next multiplier update
    inner_tol = max(opt_tol, 1e-2)
    lines = ["iter, objective, feas, opt, step"]
    status, message = "iteration-limit", ""
    feas = opt = np.inf
    f_val = float("nan")
    y_out = y
    merit_prev = np.inf
    stalled, opt_prev = 0, np.inf

    for it in range(1, max_outer + 1):
        merit = _Merit(problem, y, mu)
        x_prev = x
        try:
            res = minimize(merit, x, jac=True, method="L-BFGS-B",
                           bounds=list(zip(problem.lower, problem.upper)),
                           options=dict(maxiter=max_inner, maxfun=4 * max_inner, ftol=0.0,
                                        gtol=0.1 * inner_tol, maxcor=20))
        except Exception as exc:
            status, message = "failure", f"evaluation failed at the starting iterate: {exc}"
            break
        x = problem.project(res.x)
        if merit.consecutive_failures > 20 and merit.last_good is None:
            status, message = "failure", "persistent evaluator failure"
            break
        try:
            c = problem.eq(x)
            f_val = float(problem.objective(x))
        except Exception as exc:
            status, message = "failure", f"evaluator failed at the inner solution: {exc}"
            x = x_prev
            break
        merit_now = float(res.fun)
        if merit_now > merit_prev + 1e-12 * max(1.0, abs(merit_prev)) and it > 1:
            log.debug("augmented merit rose %.3e -> %.3e after penalty/multiplier update", merit_prev, merit_now)
        cnorm = float(np.max(np.abs(c), initial=0.0))
        if m and cnorm <= eta:
            y = y - mu * c
            eta = max(eta * 0.1, 0.1 * feas_tol)
            inner_tol = max(inner_tol * 0.1, 0.1 * opt_tol)
        elif m:
            mu = min(mu * PENALTY_GROWTH, PENALTY_MAX)
            inner_tol = max(inner_tol * 0.5, 0.1 * opt_tol)
        else:
            inner_tol = max(inner_tol * 0.01, 0.01 * opt_tol)
        merit_prev = -f_val - y @ c + 0.5 * mu * (c @ c)
        feas, opt = kkt_residuals(problem, x, y)
        y_out = y
        if m and feas <= feas_tol and opt > opt_tol:
            y_ls = least_squares_multipliers(problem, x)
            _, opt_ls = kkt_residuals(problem, x, y_ls)
            if opt_ls < opt:
                opt, y_out = opt_ls, y_ls
        step = float(np.max(np.abs(x - x_prev), initial=0.0))
        # Feasible but stuck: a large penalty makes the merit too ill-conditioned
        # for the inner solver to follow the constraints; the multipliers
        # already hold feasibility, so back the penalty off.
        stalled = stalled + 1 if (m and feas <= feas_tol and opt > opt_tol and opt > 0.9 * opt_prev) else 0
        opt_prev = opt
        if stalled >= 3 and mu > PENALTY_INIT:
            mu = max(PENALTY_INIT, mu / 100.0)
            stalled = 0
            log.debug("stationarity stalled while feasible; penalty lowered to %.1e", mu)
        line = f"{it}, {f_val:.12g}, {feas:.3e}, {opt:.3e}, {step:.3e}"
        lines.append(line)
        log.debug(line)
        if callback:
            callback(line)
        if feas <= feas_tol and opt <= opt_tol:
            status = "converged"
            break
        if step == 0.0 and it > 3 and inner_tol <= 0.1 * opt_tol and (not m or mu >= PENALTY_MAX):
            message = "no progress at the tightest inner tolerance"
            break

    return NlpSolution(x=x, objective=f_val, feasibility=feas, optimality=opt, iterations=it,
                       wall_time=time.perf_counter() - t0, status=status, multipliers=y_out,
                       log=lines, message=message)


# -- multi-start -------------------------------------------------------------

def cluster(solutions: Sequence[NlpSolution], tol: float = CLUSTER_TOL) -> list[list[int]]:
    """Group solutions whose variable vectors lie within ``tol`` (inf-norm).

    Clusters are ordered best objective first.
    """
    groups: list[list[int]] = []
    for i, s in enumerate(solutions):
        for g in groups:
            if np.max(np.abs(s.x - solutions[g[0]].x)) < tol:
                g.append(i)
                break
        else:
            groups.append([i])
    return sorted(groups, key=lambda g: -max(solutions[i].objective for i in g))


def multi_start(problem: NlpProblem, starts: Sequence, jobs: int = 1, **kwargs) -> list[NlpSolution]:
    """Independent solves from each start; a failing start yields a failure record."""
    if len(starts) == 0:
        raise ValueError("multi_start needs at least one start")

    def one(x0):
        try:
            return solve(problem, x0, **kwargs)
        except Exception as exc:
            x = problem.project(np.asarray(x0, dtype=float))
            return NlpSolution(x=x, objective=float("nan"), feasibility=np.inf, optimality=np.inf,
                               iterations=0, wall_time=0.0, status="failure", message=str(exc))

    if jobs <= 1:
        return [one(s) for s in starts]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(one, starts))
