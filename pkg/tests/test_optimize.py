import inspect

import numpy as np
import pytest

from riskctrl.optimize import (
    Oracle,
    armijo_gd,
    lbfgs,
    primal_dual_avar,
    subgradient_method,
)


def quadratic_oracle(target, scale=None):
    target = np.asarray(target, dtype=float)
    scale = np.ones_like(target) if scale is None else np.asarray(scale, dtype=float)

    def value(x):
        return float(0.5 * np.sum(scale * (x - target) ** 2))

    def value_and_grad(x):
        return value(x), scale * (x - target)

    return Oracle(value=value, value_and_grad=value_and_grad)


class ToyAvarProblem:
    """Scenario costs J_s(u) = sum((u - centers_s)^2) with quadratic tikhonov."""

    def __init__(self, centers, weights, alpha=0.0, dt=1.0):
        self.centers = np.asarray(centers, dtype=float)
        self.weights = np.asarray(weights, dtype=float)
        self.alpha = float(alpha)
        self.dt = float(dt)

    def costs(self, u):
        return np.array([float(np.sum((u - c) ** 2)) for c in self.centers])

    def costs_and_grads(self, u):
        grads = np.array([2.0 * (u - c) for c in self.centers])
        return self.costs(u), grads

    def reg_value(self, u):
        return self.alpha * float(u @ u) * self.dt

    def reg_grad(self, u):
        return 2.0 * self.alpha * u * self.dt


def test_armijo_defaults_are_pinned():
    sig = inspect.signature(armijo_gd)
    assert sig.parameters["init_step"].default == 1.0
    assert sig.parameters["c"].default == 1e-4
    assert sig.parameters["shrink"].default == 0.5
    assert sig.parameters["grow"].default == 2.0
    assert sig.parameters["min_step"].default == 1e-14


def test_armijo_quadratic_converges_monotonically():
    oracle = quadratic_oracle([1.0, -2.0, 0.5])
    x, rep = armijo_gd(oracle, np.zeros(3), max_iters=200)
    assert oracle.value(x) <= 1e-8
    hist = np.array(rep.objective_history)
    assert np.all(np.diff(hist) <= 0.0)
    assert len(rep.grad_norm_history) == len(rep.objective_history)


def test_armijo_zero_gradient_stops_immediately():
    oracle = quadratic_oracle([0.0, 0.0])
    x, rep = armijo_gd(oracle, np.zeros(2), max_iters=50)
    assert rep.termination == "zero_gradient"
    assert rep.iterations == 1
    assert np.all(x == 0.0)


def test_armijo_history_covers_returned_point_on_exhaustion():
    oracle = quadratic_oracle([3.0], scale=[1e-3])
    x, rep = armijo_gd(oracle, np.zeros(1), max_iters=10)
    assert rep.termination == "max_iters"
    assert len(rep.grad_norm_history) == 11
    f_final, g_final = oracle.value_and_grad(x)
    assert rep.grad_norm_history[-1] == pytest.approx(float(np.linalg.norm(g_final)))


def test_armijo_rejects_nonfinite_start():
    oracle = Oracle(value=lambda x: np.inf, value_and_grad=lambda x: (np.inf, x))
    with pytest.raises(ValueError):
        armijo_gd(oracle, np.ones(2), max_iters=5)


def test_subgradient_absolute_value_toy():
    def value(x):
        return float(np.abs(x[0]))

    def value_and_grad(x):
        return value(x), np.array([np.sign(x[0])])

    oracle = Oracle(value=value, value_and_grad=value_and_grad)
    x, rep = subgradient_method(oracle, np.array([1.0]), max_iters=1000, a0=0.125)
    assert value(x) <= 0.02
    assert rep.info["best_objective"] == min(rep.objective_history)
    assert value(x) == rep.info["best_objective"]


def test_subgradient_piecewise_max_toy():
    def value(x):
        return float(max(x[0], -2.0 * x[0]))

    def value_and_grad(x):
        g = 1.0 if x[0] >= 0.0 else -2.0
        return value(x), np.array([g])

    oracle = Oracle(value=value, value_and_grad=value_and_grad)
    x, _ = subgradient_method(oracle, np.array([1.0]), max_iters=1000, a0=0.125)
    assert value(x) <= 0.05


def test_subgradient_smooth_windows_decrease():
    oracle = quadratic_oracle(np.zeros(5))
    x0 = np.ones(5)
    _, rep = subgradient_method(oracle, x0, max_iters=400, a0=0.1)
    hist = np.array(rep.objective_history)
    window_means = hist.reshape(4, 100).mean(axis=1)
    assert np.all(np.diff(window_means) < 0.0)


def test_subgradient_deterministic_histories():
    oracle = quadratic_oracle([2.0, -1.0])
    x1, r1 = subgradient_method(oracle, np.zeros(2), max_iters=300, a0=0.2)
    x2, r2 = subgradient_method(oracle, np.zeros(2), max_iters=300, a0=0.2)
    assert np.array_equal(x1, x2)
    assert r1.objective_history == r2.objective_history
    assert r1.grad_norm_history == r2.grad_norm_history


def test_lbfgs_quadratic_converges():
    oracle = quadratic_oracle([1.0, -1.0, 2.0], scale=[1.0, 10.0, 100.0])
    x, rep = lbfgs(oracle, np.zeros(3), max_iters=60, grad_tol=1e-8)
    assert rep.termination == "converged"
    assert np.max(np.abs(x - np.array([1.0, -1.0, 2.0]))) <= 1e-7
    hist = np.array(rep.objective_history)
    assert np.all(np.diff(hist) <= 0.0)


def test_lbfgs_rosenbrock():
    def value(x):
        return float((1 - x[0]) ** 2 + 100.0 * (x[1] - x[0] ** 2) ** 2)

    def value_and_grad(x):
        g = np.array([
            -2.0 * (1 - x[0]) - 400.0 * x[0] * (x[1] - x[0] ** 2),
            200.0 * (x[1] - x[0] ** 2),
        ])
        return value(x), g

    oracle = Oracle(value=value, value_and_grad=value_and_grad)
    x, rep = lbfgs(oracle, np.array([-1.2, 1.0]), max_iters=1000, grad_tol=1e-8)
    assert rep.termination == "converged"
    assert np.max(np.abs(x - 1.0)) <= 1e-6


def test_lbfgs_zero_memory_still_converges():
    oracle = quadratic_oracle([0.5, 0.5])
    x, rep = lbfgs(oracle, np.zeros(2), max_iters=100, memory=0, grad_tol=1e-8)
    assert rep.termination == "converged"
    assert np.max(np.abs(x - 0.5)) <= 1e-7


def test_lbfgs_first_direction_is_steepest_descent():
    from riskctrl.optimize import _two_loop

    g = np.array([0.3, -1.2, 0.7])
    assert np.array_equal(_two_loop(g, []), g)


def test_primal_dual_symmetric_two_scenario_toy():
    prob = ToyAvarProblem(centers=[[0.0], [1.0]], weights=[0.5, 0.5])
    u, t, ident, rep = primal_dual_avar(prob, np.array([0.2]), beta=0.5)
    assert abs(u[0] - 0.5) <= 1e-4
    costs = prob.costs(u)
    # the epigraph variable lands at the beta-quantile of the final costs
    assert abs(t - 0.25) <= 1e-3
    assert abs(float(prob.weights @ ident.values) - 1.0) <= 1e-12
    assert np.all(ident.values <= 1.0 / (1.0 - 0.5) + 1e-12)
    assert rep.termination in ("converged", "max_outer")


def test_primal_dual_tiny_beta_matches_expectation_solution():
    prob = ToyAvarProblem(centers=[[0.0], [1.0]], weights=[0.75, 0.25])

    def mean_value(u):
        return float(prob.weights @ prob.costs(u))

    def mean_vg(u):
        costs, grads = prob.costs_and_grads(u)
        return float(prob.weights @ costs), prob.weights @ grads

    u_mean, _ = armijo_gd(Oracle(value=mean_value, value_and_grad=mean_vg),
                          np.array([0.9]), max_iters=200)
    u_avar, _, _, _ = primal_dual_avar(prob, np.array([0.9]), beta=1e-9)
    assert abs(u_mean[0] - 0.25) <= 1e-6
    assert abs(u_avar[0] - u_mean[0]) <= 1e-3


def test_primal_dual_constant_costs_shrink_control_to_zero():
    class ConstantProblem(ToyAvarProblem):
        def costs(self, u):
            return np.array([1.0, 2.0])

        def costs_and_grads(self, u):
            return self.costs(u), np.zeros((2, len(u)))

    prob = ConstantProblem(centers=[[0.0], [0.0]], weights=[0.5, 0.5], alpha=0.5)
    u, t, _, rep = primal_dual_avar(prob, np.array([1.5]), beta=0.8)
    assert abs(u[0]) <= 1e-3
    assert rep.termination == "converged"


def test_primal_dual_reports_exact_objectives():
    prob = ToyAvarProblem(centers=[[0.0], [1.0]], weights=[0.5, 0.5], alpha=0.01)
    u, t, ident, rep = primal_dual_avar(prob, np.array([0.3]), beta=0.5)
    from riskctrl.risk import RiskMeasure, evaluate

    exact = evaluate(RiskMeasure.avar(0.5), prob.costs(u), prob.weights) + prob.reg_value(u)
    assert rep.objective_history[-1] == pytest.approx(exact, rel=1e-12)
    assert rep.info["eps_history"][0] == 0.1
    assert rep.info["eps_history"][-1] >= 1e-5
