"""Control-affine dynamics and scenario propagation.

A system is x' = f0(x, theta) + sum_i u_i(t) * f_i(x, theta) with the drift
kept as a first-class field: it never contributes to control derivatives.
Controls are piecewise constant, so each step integrates an autonomous ODE
and the two steppers below are exact respectively fourth-order for it.
"""

from __future__ import annotations

import abc
import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .ensemble import Control, ControlGrid, EnsembleTrajectory, ParameterEnsemble

__all__ = [
    "Stepper",
    "ControlAffineSystem",
    "DivergenceError",
    "FundamentalMatrices",
    "propagate_scenario",
    "propagate_ensemble",
    "linearize_scenario",
    "fundamental_matrices",
    "duhamel_linearized",
    "rk4_step",
    "rk4_step_vjp",
    "step_transition_matrix",
]

# A state whose norm passes this bound is treated as numerically divergent.
DIVERGENCE_LIMIT = 1e12


class Stepper(enum.Enum):
    """Time-stepping scheme for one piecewise-constant control interval."""

    EXACT_BILINEAR = "exact_bilinear"
    RK4 = "rk4"


class DivergenceError(RuntimeError):
    """Raised when a scenario state leaves the trusted numerical range."""

    def __init__(self, step: int, detail: str = ""):
        self.step = step
        msg = f"state diverged at step {step}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class ControlAffineSystem(abc.ABC):
    """Interface every concrete system implements.

    ``dim`` is the (real) state dimension, ``channels`` the number of control
    channels.  Field indices are 0-based.  Systems with a closed-form step may
    implement ``exact_step`` / ``exact_step_control_derivative``; systems that
    can advance all scenarios of an ensemble at once may implement
    ``propagate_states_batch`` with the same semantics as repeated exact steps.
    """

    dim: int
    channels: int

    @abc.abstractmethod
    def initial_state(self, theta) -> np.ndarray: ...

    @abc.abstractmethod
    def drift(self, x: np.ndarray, theta) -> np.ndarray: ...

    @abc.abstractmethod
    def field(self, i: int, x: np.ndarray, theta) -> np.ndarray: ...

    @abc.abstractmethod
    def field_jacobian(self, i: int, x: np.ndarray, theta) -> np.ndarray: ...

    @abc.abstractmethod
    def drift_jacobian(self, x: np.ndarray, theta) -> np.ndarray: ...

    def exact_step(self, x: np.ndarray, theta, u_step: np.ndarray, dt: float):
        """Advance one interval exactly; returns (x_next, step_matrix)."""
        raise NotImplementedError

    def exact_step_control_derivative(
        self, x: np.ndarray, theta, u_step: np.ndarray, dt: float
    ) -> np.ndarray:
        """Rows i = d(x_next)/d(u_step[i]); shape (channels, dim)."""
        raise NotImplementedError

    @property
    def has_exact_step(self) -> bool:
        return type(self).exact_step is not ControlAffineSystem.exact_step


def _resolve_stepper(system: ControlAffineSystem, stepper: Stepper) -> Stepper:
    if stepper == Stepper.EXACT_BILINEAR and not system.has_exact_step:
        raise ValueError("system provides no exact step; use the RK4 stepper")
    return stepper


def rhs(system: ControlAffineSystem, x: np.ndarray, theta, u_step: np.ndarray) -> np.ndarray:
    out = system.drift(x, theta).copy()
    for i in range(system.channels):
        out += u_step[i] * system.field(i, x, theta)
    return out


def rhs_jacobian(system, x, theta, u_step) -> np.ndarray:
    out = system.drift_jacobian(x, theta).copy()
    for i in range(system.channels):
        out += u_step[i] * system.field_jacobian(i, x, theta)
    return out


def rk4_step(system: ControlAffineSystem, x, theta, u_step, dt: float) -> np.ndarray:
    k1 = rhs(system, x, theta, u_step)
    k2 = rhs(system, x + 0.5 * dt * k1, theta, u_step)
    k3 = rhs(system, x + 0.5 * dt * k2, theta, u_step)
    k4 = rhs(system, x + dt * k3, theta, u_step)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_step_vjp(system, x, theta, u_step, dt, lam_next):
    """Pull a costate vector back through one RK4 step.

    Exact reverse-mode transpose of ``rk4_step``: returns (lam_x, lam_u) with
    lam_x = (d x_next / d x)^T lam_next and lam_u[i] = lam_next . d x_next / d u_i.
    """
    k1 = rhs(system, x, theta, u_step)
    x2 = x + 0.5 * dt * k1
    k2 = rhs(system, x2, theta, u_step)
    x3 = x + 0.5 * dt * k2
    k3 = rhs(system, x3, theta, u_step)
    x4 = x + dt * k3

    def field_matrix(xs):
        # Columns are the control fields at xs: d rhs / d u.
        return np.stack([system.field(i, xs, theta) for i in range(system.channels)], axis=1)

    lam = np.asarray(lam_next, dtype=float)
    k1_bar = (dt / 6.0) * lam
    k2_bar = (dt / 3.0) * lam
    k3_bar = (dt / 3.0) * lam
    k4_bar = (dt / 6.0) * lam
    lam_x = lam.copy()
    lam_u = np.zeros(system.channels)

    x4_bar = rhs_jacobian(system, x4, theta, u_step).T @ k4_bar
    lam_u += field_matrix(x4).T @ k4_bar
    lam_x += x4_bar
    k3_bar = k3_bar + dt * x4_bar

    x3_bar = rhs_jacobian(system, x3, theta, u_step).T @ k3_bar
    lam_u += field_matrix(x3).T @ k3_bar
    lam_x += x3_bar
    k2_bar = k2_bar + 0.5 * dt * x3_bar

    x2_bar = rhs_jacobian(system, x2, theta, u_step).T @ k2_bar
    lam_u += field_matrix(x2).T @ k2_bar
    lam_x += x2_bar
    k1_bar = k1_bar + 0.5 * dt * x2_bar

    lam_x += rhs_jacobian(system, x, theta, u_step).T @ k1_bar
    lam_u += field_matrix(x).T @ k1_bar
    return lam_x, lam_u


def step_transition_matrix(system, x, theta, u_step, dt, stepper: Stepper) -> np.ndarray:
    """State-transition matrix d x_next / d x of a single step."""
    if stepper == Stepper.EXACT_BILINEAR:
        _, a = system.exact_step(x, theta, u_step, dt)
        return a
    n = system.dim
    eye = np.eye(n)
    j1 = rhs_jacobian(system, x, theta, u_step)
    k1 = rhs(system, x, theta, u_step)
    x2 = x + 0.5 * dt * k1
    j2 = rhs_jacobian(system, x2, theta, u_step) @ (eye + 0.5 * dt * j1)
    k2 = rhs(system, x2, theta, u_step)
    x3 = x + 0.5 * dt * k2
    j3 = rhs_jacobian(system, x3, theta, u_step) @ (eye + 0.5 * dt * j2)
    k3 = rhs(system, x3, theta, u_step)
    x4 = x + dt * k3
    j4 = rhs_jacobian(system, x4, theta, u_step) @ (eye + dt * j3)
    return eye + (dt / 6.0) * (j1 + 2.0 * j2 + 2.0 * j3 + j4)


def propagate_scenario(
    system: ControlAffineSystem, theta, u: Control, stepper: Stepper
) -> np.ndarray:
    """States of one scenario at all grid nodes; shape (steps+1, dim)."""
    stepper = _resolve_stepper(system, stepper)
    grid = u.grid
    out = np.empty((grid.steps + 1, system.dim))
    x = np.asarray(system.initial_state(theta), dtype=float)
    out[0] = x
    for j in range(grid.steps):
        if stepper == Stepper.EXACT_BILINEAR:
            x, _ = system.exact_step(x, theta, u.values[j], grid.dt)
        else:
            x = rk4_step(system, x, theta, u.values[j], grid.dt)
        if not np.all(np.isfinite(x)) or np.linalg.norm(x) > DIVERGENCE_LIMIT:
            raise DivergenceError(j, f"theta={theta!r}")
        out[j + 1] = x
    return out


def propagate_ensemble(
    system: ControlAffineSystem,
    ensemble: ParameterEnsemble,
    u: Control,
    stepper: Stepper,
    workers: int = 1,
) -> EnsembleTrajectory:
    """Propagate every scenario; the result never depends on ``workers``."""
    stepper = _resolve_stepper(system, stepper)
    if (
        stepper == Stepper.EXACT_BILINEAR
        and hasattr(system, "propagate_states_batch")
        and np.asarray(ensemble.thetas).ndim == 1
    ):
        states = system.propagate_states_batch(ensemble.thetas, u.values, u.grid.dt)
        return EnsembleTrajectory(ensemble=ensemble, grid=u.grid, states=states)

    rows = np.empty((ensemble.size, u.grid.steps + 1, system.dim))

    def run(s: int) -> None:
        rows[s] = propagate_scenario(system, ensemble.thetas[s], u, stepper)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, range(ensemble.size)))
    else:
        for s in range(ensemble.size):
            run(s)
    return EnsembleTrajectory(ensemble=ensemble, grid=u.grid, states=rows)


def linearize_scenario(
    system: ControlAffineSystem,
    theta,
    u: Control,
    v: Control,
    base_traj: np.ndarray,
) -> np.ndarray:
    """First-order trajectory response to a control perturbation v.

    Integrates y' = (df0 + sum_i u_i df_i)(x_u) y + sum_i v_i f_i(x_u), y(0)=0
    with RK4 along the stored base trajectory, interpolating base states
    linearly at half steps.  Shape (steps+1, dim).
    """
    grid = u.grid
    if v.grid != grid or v.channels != u.channels:
        raise ValueError("perturbation must live on the control's grid and channels")
    dt = grid.dt
    out = np.zeros((grid.steps + 1, system.dim))
    y = np.zeros(system.dim)
    for j in range(grid.steps):
        x0 = base_traj[j]
        x1 = base_traj[j + 1]
        xm = 0.5 * (x0 + x1)
        uj = u.values[j]
        vj = v.values[j]

        def f(xs, yv):
            out_v = rhs_jacobian(system, xs, theta, uj) @ yv
            for i in range(system.channels):
                out_v += vj[i] * system.field(i, xs, theta)
            return out_v

        k1 = f(x0, y)
        k2 = f(xm, y + 0.5 * dt * k1)
        k3 = f(xm, y + 0.5 * dt * k2)
        k4 = f(x1, y + dt * k3)
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[j + 1] = y
    return out


@dataclass(frozen=True)
class FundamentalMatrices:
    """Discrete fundamental solutions M[j] = dx_j/dx_0 and their inverses."""

    grid: ControlGrid
    m: np.ndarray
    m_inv: np.ndarray

    def __post_init__(self):
        if self.m.shape != self.m_inv.shape or self.m.shape[0] != self.grid.steps + 1:
            raise ValueError("m and m_inv must both hold steps+1 square matrices")


def fundamental_matrices(
    system: ControlAffineSystem,
    theta,
    u: Control,
    base_traj: np.ndarray,
    stepper: Stepper,
) -> FundamentalMatrices:
    """Accumulate per-step transition matrices into M and its exact inverse.

    M solves the variational matrix equation along the base trajectory and
    M_inv the adjoint-side one; accumulating per-step inverses keeps
    M[j] @ M_inv[j] at the identity to machine precision for every j.
    """
    stepper = _resolve_stepper(system, stepper)
    grid = u.grid
    n = system.dim
    m = np.empty((grid.steps + 1, n, n))
    m_inv = np.empty((grid.steps + 1, n, n))
    m[0] = np.eye(n)
    m_inv[0] = np.eye(n)
    for j in range(grid.steps):
        a = step_transition_matrix(system, base_traj[j], theta, u.values[j], grid.dt, stepper)
        m[j + 1] = a @ m[j]
        m_inv[j + 1] = m_inv[j] @ np.linalg.inv(a)
    return FundamentalMatrices(grid=grid, m=m, m_inv=m_inv)


def duhamel_linearized(
    system: ControlAffineSystem,
    theta,
    u: Control,
    v: Control,
    base_traj: np.ndarray,
    fm: FundamentalMatrices,
) -> np.ndarray:
    """Linearized response via the variation-of-constants representation.

    y(t_j) = M[j] * integral_0^{t_j} M_inv(s) sum_i v_i(s) f_i(x_u(s)) ds with
    trapezoidal accumulation per interval.  Cross-check for linearize_scenario,
    not a production path.
    """
    grid = u.grid
    dt = grid.dt
    n = system.dim
    # v is constant on each interval, so the trapezoid weights both interval
    # endpoints with the same v value.
    integral = np.zeros(n)
    out = np.zeros((grid.steps + 1, n))
    for j in range(grid.steps):
        vj = v.values[j]
        lo = np.zeros(n)
        hi = np.zeros(n)
        for i in range(system.channels):
            lo += vj[i] * system.field(i, base_traj[j], theta)
            hi += vj[i] * system.field(i, base_traj[j + 1], theta)
        integral = integral + 0.5 * dt * (fm.m_inv[j] @ lo + fm.m_inv[j + 1] @ hi)
        out[j + 1] = fm.m[j + 1] @ integral
    return out
