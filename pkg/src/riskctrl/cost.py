"""Tracking costs over time measures and their exact discrete adjoints.

The tracking term of one scenario is  sum_a w_a * a(t_a, x(t_a))  over the
atoms of a cost measure plus an optional Lebesgue part, discretized with the
trapezoid rule on the control grid.  Gradients with respect to the control
come from the adjoint of the *discretized* dynamics, so they are exact for
the discrete objective no matter how coarse the grid is.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass

import numpy as np

from .dynamics import ControlAffineSystem, Stepper, rk4_step_vjp
from .ensemble import (
    ConfigError,
    Control,
    ControlGrid,
    ParameterEnsemble,
    control_l2_norm_sq,
)

__all__ = [
    "CostMeasure",
    "Integrand",
    "AdjointTrajectory",
    "ControlCost",
    "scenario_cost",
    "adjoint_solve",
    "tracking_gradient",
    "assemble_gradient",
    "stationarity_residual",
]


@dataclass(frozen=True)
class CostMeasure:
    """Nonnegative measure on [0, T]: point atoms plus a uniform density.

    ``atoms`` is a tuple of (time, weight) pairs; ``lebesgue_weight`` scales
    the uniform part.  Atom times must sit on a grid node within dt/2 when the
    measure is discretized against a grid.
    """

    atoms: tuple = ()
    lebesgue_weight: float = 0.0

    def __post_init__(self):
        atoms = tuple((float(t), float(w)) for t, w in self.atoms)
        for t, w in atoms:
            if not np.isfinite(t) or t < 0.0:
                raise ValueError("atom times must be finite and nonnegative")
            if not np.isfinite(w) or w < 0.0:
                raise ValueError("atom weights must be finite and nonnegative")
        if not np.isfinite(self.lebesgue_weight) or self.lebesgue_weight < 0.0:
            raise ValueError("lebesgue_weight must be finite and nonnegative")
        if not atoms and self.lebesgue_weight == 0.0:
            raise ValueError("cost measure must carry some mass")
        object.__setattr__(self, "atoms", atoms)

    @staticmethod
    def terminal(horizon: float, weight: float = 1.0) -> "CostMeasure":
        return CostMeasure(atoms=((horizon, weight),))


class Integrand(abc.ABC):
    """Pointwise tracking integrand a(t, x, theta) with its state gradient."""

    @abc.abstractmethod
    def value(self, t: float, x: np.ndarray, theta) -> float: ...

    @abc.abstractmethod
    def gradient(self, t: float, x: np.ndarray, theta) -> np.ndarray: ...


def _atom_node_weights(measure: CostMeasure, grid: ControlGrid) -> np.ndarray:
    """Atom weight carried by each grid node; atoms sharing a node add up."""
    out = np.zeros(grid.steps + 1)
    dt = grid.dt
    for t, w in measure.atoms:
        j = int(np.floor(t / dt + 0.5))
        if j < 0 or j > grid.steps or abs(t - j * dt) > 0.5 * dt + 1e-12:
            raise ConfigError(
                f"cost atom at t={t!r} is off the grid "
                f"(nearest node {min(max(j, 0), grid.steps) * dt!r}, dt={dt!r})"
            )
        out[j] += w
    return out


def _trapezoid_weights(steps: int) -> np.ndarray:
    c = np.ones(steps + 1)
    c[0] = 0.5
    c[-1] = 0.5
    return c


def scenario_cost(
    traj_row: np.ndarray,
    integrand: Integrand,
    measure: CostMeasure,
    theta,
    grid: ControlGrid,
) -> float:
    """Tracking cost of one propagated scenario against a cost measure."""
    atom_w = _atom_node_weights(measure, grid)
    times = grid.nodes()
    total = 0.0
    for j in np.nonzero(atom_w)[0]:
        total += atom_w[j] * integrand.value(times[j], traj_row[j], theta)
    if measure.lebesgue_weight > 0.0:
        c = _trapezoid_weights(grid.steps)
        vals = np.array(
            [integrand.value(times[j], traj_row[j], theta) for j in range(grid.steps + 1)]
        )
        total += measure.lebesgue_weight * grid.dt * float(c @ vals)
    return float(total)


@dataclass(frozen=True)
class AdjointTrajectory:
    """Backward costate of one scenario.

    ``p_plus[j]`` is the right limit of the costate at node j (zero at the
    final node), ``jumps`` maps atom nodes to their jump w_a * grad a, and
    ``lam[j]`` is the full derivative of the scenario cost with respect to
    the state at node j (p_plus plus the node's atom jump and its share of
    the Lebesgue quadrature).
    """

    p_plus: np.ndarray
    jumps: dict
    lam: np.ndarray


def adjoint_solve(
    system: ControlAffineSystem,
    theta,
    u: Control,
    traj_row: np.ndarray,
    integrand: Integrand,
    measure: CostMeasure,
    stepper: Stepper,
) -> AdjointTrajectory:
    """Exact discrete adjoint sweep for one scenario.

    The pullback through a step is the transpose of that step's transition
    map: the stored matrix for exact bilinear steps, the reverse-mode
    transpose of the RK4 update otherwise.
    """
    grid = u.grid
    steps, n = grid.steps, system.dim
    dt = grid.dt
    times = grid.nodes()
    atom_w = _atom_node_weights(measure, grid)
    leb = measure.lebesgue_weight
    trap = _trapezoid_weights(steps) if leb > 0.0 else None

    p_plus = np.zeros((steps + 1, n))
    lam = np.zeros((steps + 1, n))
    jumps = {}

    def node_sources(j):
        jump = None
        leb_src = 0.0
        if atom_w[j] > 0.0 or leb > 0.0:
            grad = integrand.gradient(times[j], traj_row[j], theta)
            if atom_w[j] > 0.0:
                jump = atom_w[j] * grad
            if leb > 0.0:
                leb_src = leb * trap[j] * dt * grad
        return jump, leb_src

    jump, leb_src = node_sources(steps)
    lam[steps] = leb_src
    if jump is not None:
        jumps[steps] = jump
        lam[steps] = lam[steps] + jump

    for j in range(steps - 1, -1, -1):
        if stepper == Stepper.EXACT_BILINEAR:
            _, a = system.exact_step(traj_row[j], theta, u.values[j], dt)
            pull = a.T @ lam[j + 1]
        else:
            pull, _ = rk4_step_vjp(system, traj_row[j], theta, u.values[j], dt, lam[j + 1])
        p_plus[j] = pull
        lam[j] = pull
        jump, leb_src = node_sources(j)
        if jump is not None:
            jumps[j] = jump
            lam[j] = lam[j] + jump
        lam[j] = lam[j] + leb_src
    return AdjointTrajectory(p_plus=p_plus, jumps=jumps, lam=lam)


def tracking_gradient(
    system: ControlAffineSystem,
    theta,
    u: Control,
    traj_row: np.ndarray,
    adjoint: AdjointTrajectory,
    stepper: Stepper,
) -> np.ndarray:
    """Control gradient of one scenario's tracking cost; shape (steps, channels)."""
    grid = u.grid
    out = np.empty((grid.steps, u.channels))
    for j in range(grid.steps):
        if stepper == Stepper.EXACT_BILINEAR:
            rows = system.exact_step_control_derivative(
                traj_row[j], theta, u.values[j], grid.dt
            )
            out[j] = rows @ adjoint.lam[j + 1]
        else:
            _, lam_u = rk4_step_vjp(
                system, traj_row[j], theta, u.values[j], grid.dt, adjoint.lam[j + 1]
            )
            out[j] = lam_u
    return out


@dataclass(frozen=True)
class ControlCost:
    """Quadratic control penalty alpha * ||u||_{L2}^2."""

    alpha: float

    def __post_init__(self):
        if not np.isfinite(self.alpha) or self.alpha < 0.0:
            raise ValueError("alpha must be finite and nonnegative")

    def value(self, u: Control) -> float:
        return self.alpha * control_l2_norm_sq(u)

    def gradient(self, u: Control) -> np.ndarray:
        # d/du_j of alpha * sum |u_j|^2 dt
        return 2.0 * self.alpha * u.values * u.grid.dt


def assemble_gradient(
    ensemble: ParameterEnsemble,
    identifier_values: np.ndarray,
    tracking_grads: np.ndarray,
    u: Control,
    control_cost: ControlCost,
) -> np.ndarray:
    """Risk-weighted total gradient sum_s w_s vartheta_s g_s + penalty term."""
    tracking_grads = np.asarray(tracking_grads, dtype=float)
    if tracking_grads.shape[0] != ensemble.size:
        raise ValueError("one tracking gradient row per scenario required")
    coeff = ensemble.weights * np.asarray(identifier_values, dtype=float)
    weighted = np.einsum("s,s...->...", coeff, tracking_grads)
    return weighted.reshape(u.values.shape) + control_cost.gradient(u)


def stationarity_residual(
    u: Control,
    gradient: np.ndarray,
    control_cost: ControlCost,
    bounds=None,
) -> float:
    """First-order residual; zero exactly at a stationary control.

    Unconstrained: the discrete L2 norm of the assembled gradient viewed as a
    function of time, i.e. ||gradient|| / sqrt(dt).  With box bounds (lo, hi):
    the norm of u - clip(u - gradient / (2 alpha dt), lo, hi).
    """
    g = np.asarray(gradient, dtype=float).reshape(u.values.shape)
    if bounds is None:
        return float(np.linalg.norm(g) / np.sqrt(u.grid.dt))
    lo, hi = bounds
    if control_cost.alpha <= 0.0:
        raise ValueError("box residual needs a positive control cost weight")
    scale = 2.0 * control_cost.alpha * u.grid.dt
    projected = np.clip(u.values - g / scale, lo, hi)
    return float(np.linalg.norm(u.values - projected))
