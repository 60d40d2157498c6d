"""Risk measures on discrete scenario costs and their dual identifiers.

The average value-at-risk at level beta is defined variationally,

    AVaR_beta(J) = inf_t { t + E[max(0, J - t)] / (1 - beta) },

and the infimum is attained at any beta-quantile of J.  Its dual
representation maximizes sum_s w_s vartheta_s J_s over densities with
0 <= vartheta <= 1/(1-beta) and sum_s w_s vartheta_s = 1; the maximizer (the
risk identifier) is found by a greedy fill from the largest cost downward.
Expectation and the essential supremum are the two limiting cases.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

__all__ = [
    "RiskMeasure",
    "RiskIdentifier",
    "evaluate",
    "ru_objective",
    "risk_identifier",
    "smoothed_avar",
]

EXPECTATION = "expectation"
WORST_CASE = "worst_case"
AVAR = "avar"


@dataclass(frozen=True)
class RiskMeasure:
    kind: str
    beta: float | None = None

    def __post_init__(self):
        if self.kind not in (EXPECTATION, WORST_CASE, AVAR):
            raise ValueError(f"unknown risk measure kind {self.kind!r}")
        if self.kind == AVAR:
            if self.beta is None or not (0.0 < self.beta < 1.0):
                raise ValueError("avar requires a level beta strictly inside (0, 1)")
        elif self.beta is not None:
            raise ValueError(f"{self.kind} takes no level parameter")

    @staticmethod
    def expectation() -> "RiskMeasure":
        return RiskMeasure(EXPECTATION)

    @staticmethod
    def worst_case() -> "RiskMeasure":
        return RiskMeasure(WORST_CASE)

    @staticmethod
    def avar(beta: float) -> "RiskMeasure":
        return RiskMeasure(AVAR, float(beta))


@dataclass(frozen=True)
class RiskIdentifier:
    """Dual density vartheta over scenarios; pairs with weights w as w*vartheta."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1:
            raise ValueError("identifier must be a flat per-scenario vector")
        if np.any(values < 0.0):
            raise ValueError("identifier values must be nonnegative")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)


def _check_inputs(costs, weights):
    costs = np.asarray(costs, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if costs.shape != weights.shape or costs.ndim != 1:
        raise ValueError("costs and weights must be flat vectors of equal length")
    return costs, weights


def _quantile_index(costs, weights, beta):
    """Index (into the original vectors) of the lower beta-quantile."""
    order = np.argsort(costs, kind="stable")
    cum = np.cumsum(weights[order])
    pos = int(np.searchsorted(cum, beta, side="left"))
    pos = min(pos, len(order) - 1)
    return int(order[pos])


def ru_objective(t: float, costs, weights, beta: float) -> float:
    """Rockafellar-Uryasev objective t + E[(J - t)^+]/(1-beta)."""
    costs, weights = _check_inputs(costs, weights)
    excess = np.maximum(costs - t, 0.0)
    return float(t + (weights @ excess) / (1.0 - beta))


def evaluate(measure: RiskMeasure, costs, weights) -> float:
    """Value of the risk measure on the discrete cost distribution."""
    costs, weights = _check_inputs(costs, weights)
    if measure.kind == EXPECTATION:
        return float(weights @ costs)
    support = weights > 0.0
    if not np.any(support):
        raise ValueError("weights carry no mass")
    if measure.kind == WORST_CASE:
        return float(np.max(costs[support]))
    t_star = costs[_quantile_index(costs, weights, measure.beta)]
    return ru_objective(t_star, costs, weights, measure.beta)


def risk_identifier(measure: RiskMeasure, costs, weights) -> RiskIdentifier:
    """Maximizer of the dual representation at the given cost vector.

    Worst case puts the whole unit mass on the smallest-index attaining
    scenario; avar fills scenarios from the largest cost down at the cap
    1/(1-beta), splitting the boundary group proportionally to its weights.
    """
    costs, weights = _check_inputs(costs, weights)
    s = len(costs)
    if measure.kind == EXPECTATION:
        return RiskIdentifier(np.ones(s))
    support = weights > 0.0
    if not np.any(support):
        raise ValueError("weights carry no mass")
    if measure.kind == WORST_CASE:
        masked = np.where(support, costs, -np.inf)
        idx = int(np.argmax(masked))
        vartheta = np.zeros(s)
        vartheta[idx] = 1.0 / weights[idx]
        return RiskIdentifier(vartheta)

    cap = 1.0 / (1.0 - measure.beta)
    vartheta = np.zeros(s)
    order = np.argsort(costs, kind="stable")[::-1]
    remaining = 1.0
    pos = 0
    while pos < s and remaining > 0.0:
        # Group all scenarios tied at the current cost level.
        level = costs[order[pos]]
        group = [order[pos]]
        pos += 1
        while pos < s and costs[order[pos]] == level:
            group.append(order[pos])
            pos += 1
        group = np.array(group)
        group_w = float(np.sum(weights[group]))
        if group_w == 0.0:
            continue
        take = min(remaining, cap * group_w)
        vartheta[group] = np.where(weights[group] > 0.0, take / group_w, 0.0)
        remaining -= take
    return RiskIdentifier(vartheta)


def smoothed_avar(costs, weights, beta: float, t: float, eps: float):
    """Softplus-smoothed Rockafellar-Uryasev objective and its partials.

    Returns (value, d/dt, d/dcosts) of
    t + sum_s w_s softplus_eps(J_s - t) / (1 - beta) with
    softplus_eps(z) = eps * log(1 + exp(z / eps)), computed overflow-safe.
    The cost partials lie strictly inside (0, w_s / (1 - beta)).
    """
    costs, weights = _check_inputs(costs, weights)
    if not (0.0 < beta < 1.0):
        raise ValueError("beta must lie strictly inside (0, 1)")
    if eps <= 0.0:
        raise ValueError("smoothing width eps must be positive")
    z = costs - t
    softplus = np.maximum(z, 0.0) + eps * np.log1p(np.exp(-np.abs(z) / eps))
    sigma = expit(z / eps)
    inv = 1.0 / (1.0 - beta)
    value = float(t + inv * (weights @ softplus))
    d_dt = float(1.0 - inv * (weights @ sigma))
    d_dcosts = inv * weights * sigma
    return value, d_dt, d_dcosts
