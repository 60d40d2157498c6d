"""Two-level quantum system driven by a single real control channel.

State i psi' = (H0 + u(t) H1) psi with detuned free Hamiltonian
H0 = diag(E + theta, -(E + theta)) and coupling H1 = sigma_x.  Steps over a
piecewise-constant interval have the closed su(2) form, so propagation is
exact and unitary; the control derivative of a step is available both through
the block-augmented matrix exponential (reference) and in closed form
(vectorized fast path).  States cross the generic real-vector interface in
the realified layout (Re psi_1, Im psi_1, Re psi_2, Im psi_2).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .cost import Integrand
from .dynamics import ControlAffineSystem

__all__ = [
    "QubitSystem",
    "QubitStepData",
    "TerminalInfidelity",
    "pauli_expm",
    "qubit_step",
    "step_control_derivative",
    "overlap_infidelity",
    "reference_control",
    "realify_state",
    "complexify_state",
    "realify_matrix",
]

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)

# Below this angle the sinc factor switches to its truncated series.
SMALL_ANGLE = 1e-8


def realify_state(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return np.array([psi[0].real, psi[0].imag, psi[1].real, psi[1].imag])


def complexify_state(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.array([x[0] + 1j * x[1], x[2] + 1j * x[3]])


def realify_matrix(u: np.ndarray) -> np.ndarray:
    """Real 4x4 matrix acting on realified states as u acts on complex ones."""
    out = np.empty((4, 4))
    for a in range(2):
        for b in range(2):
            re, im = u[a, b].real, u[a, b].imag
            out[2 * a : 2 * a + 2, 2 * b : 2 * b + 2] = ((re, -im), (im, re))
    return out


def pauli_expm(c0: float, c: np.ndarray, dt: float) -> np.ndarray:
    """exp(-i dt (c0 I + c . sigma)) in closed form.

    Uses cos(|c| dt) I - i dt sinc(|c| dt) (c . sigma) up to the global phase
    from c0; for |c| dt below SMALL_ANGLE the sinc factor is replaced by its
    second-order series, so c = 0 is exact.
    """
    c = np.asarray(c, dtype=float)
    r = float(np.linalg.norm(c))
    phi = r * dt
    if phi < SMALL_ANGLE:
        s = dt * (1.0 - phi * phi / 6.0)
    else:
        s = np.sin(phi) / r
    csigma = c[0] * SIGMA_X + c[1] * SIGMA_Y + c[2] * SIGMA_Z
    u = np.cos(phi) * np.eye(2, dtype=complex) - 1j * s * csigma
    if c0 != 0.0:
        u = np.exp(-1j * c0 * dt) * u
    return u


@dataclass(frozen=True)
class QubitStepData:
    """Cache of one exact step: generator coefficients and the propagator."""

    c: np.ndarray
    dt: float
    propagator: np.ndarray


@dataclass(frozen=True)
class QubitSystem(ControlAffineSystem):
    """The concrete two-level system; parameters theta shift the detuning."""

    energy: float = 1.0
    initial: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0], dtype=complex))
    target: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0], dtype=complex))

    dim = 4
    channels = 1

    def __post_init__(self):
        if not np.isfinite(self.energy):
            raise ValueError("energy must be finite")
        for name in ("initial", "target"):
            v = np.asarray(getattr(self, name), dtype=complex)
            if v.shape != (2,) or abs(np.linalg.norm(v) - 1.0) > 1e-12:
                raise ValueError(f"{name} must be a normalized two-component state")
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    # -- generic real-vector interface -------------------------------------

    def initial_state(self, theta) -> np.ndarray:
        return realify_state(self.initial)

    def _h0_matrix(self, theta) -> np.ndarray:
        return realify_matrix(-1j * (self.energy + theta) * SIGMA_Z)

    _h1_matrix = realify_matrix(-1j * SIGMA_X)

    def drift(self, x, theta) -> np.ndarray:
        return self._h0_matrix(theta) @ x

    def drift_jacobian(self, x, theta) -> np.ndarray:
        return self._h0_matrix(theta)

    def field(self, i, x, theta) -> np.ndarray:
        if i != 0:
            raise IndexError("qubit has a single control channel")
        return self._h1_matrix @ x

    def field_jacobian(self, i, x, theta) -> np.ndarray:
        if i != 0:
            raise IndexError("qubit has a single control channel")
        return self._h1_matrix

    def exact_step(self, x, theta, u_step, dt):
        psi = complexify_state(x)
        psi_next, data = qubit_step(self, psi, theta, float(np.atleast_1d(u_step)[0]), dt)
        return realify_state(psi_next), realify_matrix(data.propagator)

    def exact_step_control_derivative(self, x, theta, u_step, dt):
        psi = complexify_state(x)
        _, data = qubit_step(self, psi, theta, float(np.atleast_1d(u_step)[0]), dt)
        return step_control_derivative(data, psi).reshape(1, 4)

    # -- vectorized scenario batch ------------------------------------------

    def propagate_states_batch(self, thetas, u_values, dt) -> np.ndarray:
        psis = propagate_states(self, thetas, u_values, dt)
        s, nodes = psis.shape[0], psis.shape[1]
        out = np.empty((s, nodes, 4))
        out[:, :, 0] = psis[:, :, 0].real
        out[:, :, 1] = psis[:, :, 0].imag
        out[:, :, 2] = psis[:, :, 1].real
        out[:, :, 3] = psis[:, :, 1].imag
        return out


def qubit_step(system: QubitSystem, psi, theta, u_val: float, dt: float):
    """Advance one interval exactly; returns (psi_next, cached step data)."""
    c = np.array([u_val, 0.0, system.energy + theta])
    u = pauli_expm(0.0, c, dt)
    return u @ np.asarray(psi, dtype=complex), QubitStepData(c=c, dt=dt, propagator=u)


def step_control_derivative(data: QubitStepData, psi) -> np.ndarray:
    """Derivative of the stepped state w.r.t. the interval's control value.

    Computed through the block-augmented matrix exponential: the upper-right
    block of expm([[A, E], [0, A]]) is the Frechet derivative of expm at
    A = -i dt (c . sigma) in direction E = -i dt sigma_x.  Returns the
    realified 4-vector d(psi_next)/d(u).
    """
    a = -1j * data.dt * (data.c[0] * SIGMA_X + data.c[1] * SIGMA_Y + data.c[2] * SIGMA_Z)
    e = -1j * data.dt * SIGMA_X
    block = np.zeros((4, 4), dtype=complex)
    block[:2, :2] = a
    block[2:, 2:] = a
    block[:2, 2:] = e
    frechet = expm(block)[:2, 2:]
    return realify_state(frechet @ np.asarray(psi, dtype=complex))


def overlap_infidelity(psi, target):
    """Terminal cost 1 - |<target|psi>|^2 and its realified state gradient."""
    psi = np.asarray(psi, dtype=complex)
    target = np.asarray(target, dtype=complex)
    o = np.vdot(target, psi)
    value = 1.0 - float(np.abs(o)) ** 2
    grad = -2.0 * o * target
    return value, realify_state(grad)


class TerminalInfidelity(Integrand):
    """Integrand on realified qubit states: 1 - |<target|psi>|^2."""

    def __init__(self, target):
        self.target = np.asarray(target, dtype=complex)

    def value(self, t, x, theta) -> float:
        val, _ = overlap_infidelity(complexify_state(x), self.target)
        return val

    def gradient(self, t, x, theta) -> np.ndarray:
        _, grad = overlap_infidelity(complexify_state(x), self.target)
        return grad


def reference_control(t, eps1=0.5, eps2=0.1, v0=-0.5, v1=0.5, energy=1.0):
    """Literature pulse used as the untuned comparison method.

    u(t) = 2 eps1 (1 - cos(2 pi eps1 eps2 t))
           * cos(2 E t + ((v0 - v1)/(pi eps1 eps2)) sin(pi eps1 eps2 t) + (v0 + v1) t)
    """
    t = np.asarray(t, dtype=float)
    envelope = 2.0 * eps1 * (1.0 - np.cos(2.0 * np.pi * eps1 * eps2 * t))
    phase = (
        2.0 * energy * t
        + ((v0 - v1) / (np.pi * eps1 * eps2)) * np.sin(np.pi * eps1 * eps2 * t)
        + (v0 + v1) * t
    )
    return envelope * np.cos(phase)


# -- closed-form batch kernels ----------------------------------------------


def _sinc(phi: np.ndarray) -> np.ndarray:
    """sin(phi)/phi with the series branch below SMALL_ANGLE."""
    small = phi < SMALL_ANGLE
    safe = np.where(small, 1.0, phi)
    return np.where(small, 1.0 - phi * phi / 6.0, np.sin(safe) / safe)


def _dsinc_over_phi(phi: np.ndarray) -> np.ndarray:
    """(cos(phi) - sinc(phi)) / phi^2, series-guarded against cancellation."""
    small = phi < 0.1
    safe = np.where(small, 1.0, phi)
    direct = (np.cos(safe) - np.sin(safe) / safe) / (safe * safe)
    p2 = phi * phi
    series = -1.0 / 3.0 + p2 / 30.0 - p2 * p2 / 840.0 + p2 * p2 * p2 / 45360.0
    return np.where(small, series, direct)


def step_propagators(system: QubitSystem, thetas, u_values, dt, with_derivative=False):
    """Exact interval propagators for all scenarios and steps at once.

    Returns (U, dU) with shapes (S, K, 2, 2); dU is the closed-form control
    derivative dU/du (None unless requested).  Agrees with qubit_step /
    step_control_derivative to machine precision.
    """
    u = np.asarray(u_values, dtype=float).reshape(-1)[None, :]
    om = (system.energy + np.asarray(thetas, dtype=float))[:, None]
    s, k = om.shape[0], u.shape[1]
    r = np.hypot(u, om)
    phi = r * dt
    cos = np.cos(phi)
    snc = _sinc(phi)
    prop = np.empty((s, k, 2, 2), dtype=complex)
    prop[..., 0, 0] = cos - 1j * dt * snc * om
    prop[..., 0, 1] = -1j * dt * snc * u
    prop[..., 1, 0] = prop[..., 0, 1]
    prop[..., 1, 1] = cos + 1j * dt * snc * om
    if not with_derivative:
        return prop, None
    h = _dsinc_over_phi(phi)
    dt2u = dt * dt * u
    dprop = np.empty_like(prop)
    dprop[..., 0, 0] = -dt2u * snc - 1j * dt * dt2u * h * om
    dprop[..., 0, 1] = -1j * dt * (dt2u * u * h + snc)
    dprop[..., 1, 0] = dprop[..., 0, 1]
    dprop[..., 1, 1] = -dt2u * snc + 1j * dt * dt2u * h * om
    return prop, dprop


def propagate_states(system: QubitSystem, thetas, u_values, dt) -> np.ndarray:
    """Complex states (S, K+1, 2) of every scenario under one control."""
    prop, _ = step_propagators(system, thetas, u_values, dt)
    s, k = prop.shape[0], prop.shape[1]
    states = np.empty((s, k + 1, 2), dtype=complex)
    states[:, 0, :] = system.initial
    psi = states[:, 0, :]
    for j in range(k):
        psi = np.einsum("sij,sj->si", prop[:, j], psi)
        states[:, j + 1, :] = psi
    return states


def terminal_overlaps(system: QubitSystem, thetas, u_values, dt) -> np.ndarray:
    """|<target|psi(T)>| per scenario."""
    states = propagate_states(system, thetas, u_values, dt)
    o = states[:, -1, :] @ np.conj(system.target)
    return np.abs(o)


def terminal_costs(system: QubitSystem, thetas, u_values, dt, weight: float = 1.0):
    """Per-scenario terminal infidelity costs weight * (1 - |<target|psi_T>|^2)."""
    states = propagate_states(system, thetas, u_values, dt)
    o = states[:, -1, :] @ np.conj(system.target)
    return weight * (1.0 - np.abs(o) ** 2)


def terminal_costs_and_gradients(
    system: QubitSystem, thetas, u_values, dt, weight: float = 1.0
):
    """Costs and exact per-scenario control gradients in one backward sweep.

    Discrete adjoint of the exact stepping scheme: the costate is seeded with
    the terminal cost gradient and pulled back through the conjugate-transposed
    propagators, contracting against the closed-form step derivatives.
    Returns (costs (S,), gradients (S, K)).
    """
    prop, dprop = step_propagators(system, thetas, u_values, dt, with_derivative=True)
    s, k = prop.shape[0], prop.shape[1]
    states = np.empty((s, k + 1, 2), dtype=complex)
    states[:, 0, :] = system.initial
    psi = states[:, 0, :]
    for j in range(k):
        psi = np.einsum("sij,sj->si", prop[:, j], psi)
        states[:, j + 1, :] = psi
    o = states[:, -1, :] @ np.conj(system.target)
    costs = weight * (1.0 - np.abs(o) ** 2)

    lam = (-2.0 * weight) * o[:, None] * system.target[None, :]
    forced = np.einsum("skij,skj->ski", dprop, states[:, :-1, :])
    grads = np.empty((s, k))
    for j in range(k - 1, -1, -1):
        grads[:, j] = np.real(np.einsum("si,si->s", np.conj(lam), forced[:, j]))
        lam = np.einsum("sji,sj->si", np.conj(prop[:, j]), lam)
    return costs, grads
