"""First-order optimizers over flat control vectors.

Four methods: monotone Armijo gradient descent for smooth objectives, a
diminishing-step subgradient method and limited-memory BFGS for general use,
and a primal-dual continuation scheme for avar objectives that replaces the
positive part in the Rockafellar-Uryasev form by a softplus of shrinking
width.  Every reported avar objective value is the exact nonsmooth one; the
smoothing only steers the iterates.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .risk import RiskMeasure, _quantile_index, evaluate, risk_identifier, smoothed_avar

__all__ = [
    "Oracle",
    "OptReport",
    "armijo_gd",
    "subgradient_method",
    "lbfgs",
    "primal_dual_avar",
]


@dataclass(frozen=True)
class Oracle:
    """Objective callables over flat vectors: value(x) and value_and_grad(x)."""

    value: Callable[[np.ndarray], float]
    value_and_grad: Callable[[np.ndarray], tuple]


@dataclass
class OptReport:
    """What a solver did: histories, counters, and why it stopped."""

    iterations: int = 0
    objective_history: list = field(default_factory=list)
    grad_norm_history: list = field(default_factory=list)
    wall_time: float = 0.0
    termination: str = ""
    info: dict = field(default_factory=dict)


def _check_start(f: float, where: str = "u0"):
    if not np.isfinite(f):
        raise ValueError(f"objective is not finite at {where}")


def armijo_gd(
    oracle: Oracle,
    x0: np.ndarray,
    max_iters: int,
    init_step: float = 1.0,
    c: float = 1e-4,
    shrink: float = 0.5,
    grow: float = 2.0,
    min_step: float = 1e-14,
):
    """Gradient descent with backtracking; the objective never increases.

    A trial step s is accepted iff f(x - s g) <= f(x) - c s ||g||^2; on
    acceptance the next trial starts from s * grow, on rejection s shrinks.
    Stops cleanly when the gradient vanishes or no step above min_step passes.
    """
    start = time.perf_counter()
    x = np.array(x0, dtype=float)
    f, g = oracle.value_and_grad(x)
    _check_start(f)
    report = OptReport(objective_history=[float(f)], grad_norm_history=[])
    step = init_step
    termination = "max_iters"
    for it in range(1, max_iters + 1):
        report.iterations = it
        gnorm2 = float(g @ g)
        report.grad_norm_history.append(float(np.sqrt(gnorm2)))
        if gnorm2 == 0.0:
            termination = "zero_gradient"
            break
        accepted = False
        while step >= min_step:
            trial = x - step * g
            f_trial = oracle.value(trial)
            if np.isfinite(f_trial) and f_trial <= f - c * step * gnorm2:
                accepted = True
                break
            step *= shrink
        if not accepted:
            termination = "line_search_failure"
            break
        x = trial
        f, g = oracle.value_and_grad(x)
        report.objective_history.append(float(f))
        step *= grow
    else:
        # loop exhausted max_iters: cover the returned point as well
        report.grad_norm_history.append(float(np.linalg.norm(g)))
    report.termination = termination
    report.wall_time = time.perf_counter() - start
    return x, report


def subgradient_method(oracle: Oracle, x0: np.ndarray, max_iters: int, a0: float):
    """Diminishing-step subgradient method x_{m+1} = x_m - (a0/sqrt(m)) g_m.

    The step count m starts at 1.  Iterates are not monotone; the best
    visited iterate is tracked and returned.
    """
    start = time.perf_counter()
    x = np.array(x0, dtype=float)
    best_x = x.copy()
    best_f = np.inf
    report = OptReport()
    for m in range(1, max_iters + 1):
        f, g = oracle.value_and_grad(x)
        if m == 1:
            _check_start(f)
        report.iterations = m
        report.objective_history.append(float(f))
        report.grad_norm_history.append(float(np.linalg.norm(g)))
        if f < best_f:
            best_f = float(f)
            best_x = x.copy()
        x = x - (a0 / np.sqrt(m)) * g
    report.termination = "max_iters"
    report.info["best_objective"] = best_f
    report.wall_time = time.perf_counter() - start
    return best_x, report


def _two_loop(g: np.ndarray, pairs: list) -> np.ndarray:
    """L-BFGS two-loop recursion; with no stored pairs this is the identity."""
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * (s @ q)
        q -= a * y
        alphas.append(a)
    if pairs:
        s, y, _ = pairs[-1]
        q *= (s @ y) / (y @ y)
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return q


def lbfgs(
    oracle: Oracle,
    x0: np.ndarray,
    max_iters: int,
    memory: int = 10,
    grad_tol: float = 1e-8,
    c: float = 1e-4,
    shrink: float = 0.5,
    min_step: float = 1e-14,
):
    """Limited-memory BFGS with Armijo backtracking.

    Curvature pairs with s.y <= 1e-12 ||s|| ||y|| are skipped; with memory=0
    the search direction degenerates to steepest descent.  A failed line
    search triggers one restart from the steepest-descent direction before
    giving up.
    """
    start = time.perf_counter()
    x = np.array(x0, dtype=float)
    f, g = oracle.value_and_grad(x)
    _check_start(f)
    report = OptReport(objective_history=[float(f)], grad_norm_history=[])
    pairs: list = []
    termination = "max_iters"
    restarted = False
    for it in range(1, max_iters + 1):
        report.iterations = it
        gnorm = float(np.linalg.norm(g))
        report.grad_norm_history.append(gnorm)
        if gnorm <= grad_tol:
            termination = "converged"
            break
        d = -_two_loop(g, pairs)
        slope = float(g @ d)
        if slope >= 0.0:
            pairs.clear()
            d = -g
            slope = -float(g @ g)
        step = 1.0
        accepted = False
        while step >= min_step:
            trial = x + step * d
            f_trial = oracle.value(trial)
            if np.isfinite(f_trial) and f_trial <= f + c * step * slope:
                accepted = True
                break
            step *= shrink
        if not accepted:
            if not restarted and pairs:
                restarted = True
                pairs.clear()
                continue
            termination = "line_search_failure"
            break
        f_new, g_new = oracle.value_and_grad(trial)
        s_vec = trial - x
        y_vec = g_new - g
        sy = float(s_vec @ y_vec)
        if sy > 1e-12 * np.linalg.norm(s_vec) * np.linalg.norm(y_vec):
            pairs.append((s_vec, y_vec, 1.0 / sy))
            if memory >= 1:
                while len(pairs) > memory:
                    pairs.pop(0)
            else:
                pairs.clear()
        x, f, g = trial, f_new, g_new
        report.objective_history.append(float(f))
    report.termination = termination
    report.wall_time = time.perf_counter() - start
    return x, report


def primal_dual_avar(
    problem,
    u0: np.ndarray,
    beta: float,
    eps0: float = 0.1,
    eps_factor: float = 0.25,
    eps_min: float = 1e-5,
    outer_tol: float = 1e-4,
    max_outer: int = 20,
    inner_max_iters: int = 200,
    inner_memory: int = 20,
    inner_grad_tol: float = 1e-7,
):
    """Smoothing continuation for min_u avar_beta(J(u)) + regularizer.

    Jointly minimizes the epigraph variables (u, t) of the smoothed
    Rockafellar-Uryasev objective with lbfgs, warm-starting each outer pass
    and shrinking the softplus width by eps_factor down to eps_min.  The
    outer stopping test uses the exact nonsmooth stationarity residual built
    from the greedy risk identifier.  ``problem`` supplies weights, dt,
    costs(u), costs_and_grads(u), reg_value(u) and reg_grad(u).

    Returns (u*, t*, identifier, OptReport).
    """
    start = time.perf_counter()
    weights = np.asarray(problem.weights, dtype=float)
    measure = RiskMeasure.avar(beta)
    u = np.array(u0, dtype=float)
    costs0 = problem.costs(u)
    _check_start(float(weights @ costs0))
    t = float(costs0[_quantile_index(costs0, weights, beta)])

    def exact_objective(u_flat):
        costs = problem.costs(u_flat)
        return evaluate(measure, costs, weights) + problem.reg_value(u_flat)

    def exact_residual(u_flat):
        costs, grads = problem.costs_and_grads(u_flat)
        ident = risk_identifier(measure, costs, weights)
        g = (weights * ident.values) @ grads + problem.reg_grad(u_flat)
        return float(np.linalg.norm(g) / np.sqrt(problem.dt)), ident

    def smoothed_oracle(eps):
        def value(z):
            u_flat, t_val = z[:-1], z[-1]
            costs = problem.costs(u_flat)
            val, _, _ = smoothed_avar(costs, weights, beta, t_val, eps)
            return val + problem.reg_value(u_flat)

        def value_and_grad(z):
            u_flat, t_val = z[:-1], z[-1]
            costs, grads = problem.costs_and_grads(u_flat)
            val, d_dt, d_dcosts = smoothed_avar(costs, weights, beta, t_val, eps)
            g_u = d_dcosts @ grads + problem.reg_grad(u_flat)
            return val + problem.reg_value(u_flat), np.concatenate([g_u, [d_dt]])

        return Oracle(value=value, value_and_grad=value_and_grad)

    report = OptReport()
    eps = eps0
    z = np.concatenate([u, [t]])
    termination = "max_outer"
    degraded = False
    eps_history = []
    inner_iters = []
    for outer in range(1, max_outer + 1):
        report.iterations = outer
        z_new, inner = lbfgs(
            smoothed_oracle(eps),
            z,
            max_iters=inner_max_iters,
            memory=inner_memory,
            grad_tol=inner_grad_tol,
        )
        if inner.termination == "line_search_failure":
            degraded = True
        z = z_new
        u, t = z[:-1], float(z[-1])
        residual, _ = exact_residual(u)
        report.objective_history.append(exact_objective(u))
        report.grad_norm_history.append(residual)
        eps_history.append(eps)
        inner_iters.append(inner.iterations)
        if eps <= eps_min and residual <= outer_tol:
            termination = "converged"
            break
        eps = max(eps * eps_factor, eps_min)
    costs = problem.costs(u)
    identifier = risk_identifier(measure, costs, weights)
    report.termination = termination
    report.wall_time = time.perf_counter() - start
    report.info.update(
        {
            "t_star": t,
            "eps_history": eps_history,
            "inner_iterations": inner_iters,
            "degraded": degraded,
        }
    )
    return u, t, identifier, report
