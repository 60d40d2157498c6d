"""Core value types shared by all solver components.

Scenario ensembles, uniform time grids, piecewise-constant controls and
propagated ensemble trajectories.  Every type here is immutable after
construction, so instances can be shared freely across scenario workers.
All reductions over scenarios use numpy's fixed pairwise summation, which
makes results bit-identical across runs and worker counts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ConfigError",
    "ParameterEnsemble",
    "ControlGrid",
    "Control",
    "EnsembleTrajectory",
    "make_uniform_grid",
    "control_l1_norm",
    "control_l2_norm_sq",
]

WEIGHT_TOL = 1e-12
GRID_TOL = 1e-12


class ConfigError(ValueError):
    """A user-supplied configuration value is inconsistent or out of range."""


def _readonly(a, dtype=float) -> np.ndarray:
    out = np.array(a, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class ParameterEnsemble:
    """Finite atomic parameter measure: atoms ``thetas`` carrying ``weights``.

    The scenario index, not the parameter value, is the identity key;
    duplicate atoms are legal and propagate independently.
    """

    thetas: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        thetas = _readonly(self.thetas)
        weights = _readonly(self.weights)
        if weights.ndim != 1:
            raise ValueError("weights must be one-dimensional")
        if thetas.shape[0] != weights.shape[0]:
            raise ValueError("thetas and weights must have equal length")
        if weights.shape[0] < 1:
            raise ValueError("ensemble needs at least one scenario")
        if np.any(weights < 0.0):
            raise ValueError("weights must be nonnegative")
        if abs(float(np.sum(weights)) - 1.0) > WEIGHT_TOL:
            raise ValueError(
                f"weights must sum to one within {WEIGHT_TOL:g}, "
                f"got {float(np.sum(weights))!r}"
            )
        object.__setattr__(self, "thetas", thetas)
        object.__setattr__(self, "weights", weights)

    @property
    def size(self) -> int:
        return int(self.weights.shape[0])


def make_uniform_grid(theta_lo: float, theta_hi: float, n: int) -> ParameterEnsemble:
    """Uniform scenario grid: n+1 equally spaced atoms, each of weight 1/(n+1)."""
    if not np.isfinite(theta_lo) or not np.isfinite(theta_hi):
        raise ValueError("grid bounds must be finite")
    if theta_lo > theta_hi:
        raise ValueError("theta_lo must not exceed theta_hi")
    if n < 1:
        raise ValueError("n must be at least 1")
    thetas = np.linspace(theta_lo, theta_hi, n + 1)
    weights = np.full(n + 1, 1.0 / (n + 1))
    return ParameterEnsemble(thetas=thetas, weights=weights)


@dataclass(frozen=True)
class ControlGrid:
    """Uniform time grid on [0, horizon] with ``steps`` intervals of width dt."""

    horizon: float
    steps: int

    def __post_init__(self):
        if not np.isfinite(self.horizon) or self.horizon <= 0.0:
            raise ValueError("horizon must be positive and finite")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError("steps must be a positive integer")
        object.__setattr__(self, "steps", int(self.steps))
        if abs(self.dt * self.steps - self.horizon) > GRID_TOL:
            raise ValueError("dt * steps must reproduce the horizon within 1e-12")

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    def nodes(self) -> np.ndarray:
        """All grid nodes t_0 .. t_K, including both endpoints."""
        return np.arange(self.steps + 1) * self.dt

    def left_endpoints(self) -> np.ndarray:
        """Left endpoint of each interval; the sample times of a control."""
        return np.arange(self.steps) * self.dt


@dataclass(frozen=True)
class Control:
    """Piecewise-constant control: ``values[j]`` acts on [t_j, t_{j+1})."""

    grid: ControlGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values.reshape(-1, 1)
        if values.ndim != 2 or values.shape[0] != self.grid.steps:
            raise ValueError(
                f"values must have shape (steps, channels) = ({self.grid.steps}, k)"
            )
        if values.shape[1] < 1:
            raise ValueError("control needs at least one channel")
        if not np.all(np.isfinite(values)):
            raise ValueError("control values must be finite")
        object.__setattr__(self, "values", _readonly(values))

    @property
    def channels(self) -> int:
        return int(self.values.shape[1])

    def flat(self) -> np.ndarray:
        return self.values.reshape(-1).copy()

    @staticmethod
    def from_flat(grid: ControlGrid, flat: np.ndarray, channels: int = 1) -> "Control":
        flat = np.asarray(flat, dtype=float)
        return Control(grid, flat.reshape(grid.steps, channels))


@dataclass(frozen=True)
class EnsembleTrajectory:
    """States of every scenario at every grid node; shape (S, steps+1, n)."""

    ensemble: ParameterEnsemble
    grid: ControlGrid
    states: np.ndarray

    def __post_init__(self):
        states = np.asarray(self.states, dtype=float)
        expected = (self.ensemble.size, self.grid.steps + 1)
        if states.ndim != 3 or states.shape[:2] != expected:
            raise ValueError(
                f"states must have shape (scenarios, steps+1, n) = {expected} + (n,)"
            )
        object.__setattr__(self, "states", _readonly(states))

    @property
    def dim(self) -> int:
        return int(self.states.shape[2])


def control_l1_norm(u: Control) -> float:
    """L1-in-time norm: sum over steps of the Euclidean channel norm times dt."""
    return float(np.sum(np.linalg.norm(u.values, axis=1)) * u.grid.dt)


def control_l2_norm_sq(u: Control) -> float:
    """Squared L2-in-time norm: sum over steps of the squared values times dt."""
    return float(np.sum(u.values * u.values) * u.grid.dt)
