"""Exact cost of constant policies, independent of the QVI solution.

Under a constant retention ``u`` with injections of size ``xi`` at every ruin
time, the surplus restarts at ``xi`` after each injection, so the cost is a
discounted renewal-reward sum. The expected discount to the first passage
from ``x`` down to 0 of a Brownian motion with drift ``m`` and variance rate
``s2`` is ``exp(-g x)`` with ``g`` the positive root of
``s2/2 g^2 - m g - r = 0``, which gives

    cost(x) = (K + c xi) exp(-g x) / (1 - exp(-g xi)).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDiffusion, InvalidParameter
from .risk_model import ModelParams, Reinsurance, make_profile


@dataclass(frozen=True)
class PolicySpec:
    """Constant retention ``u`` and injection size ``xi`` paid at ruin times."""

    u: float
    xi: float

    def __post_init__(self):
        if not self.u >= 0:
            raise InvalidParameter("policy.u", f"must be >= 0, got {self.u}")
        if not self.xi > 0:
            raise InvalidParameter("policy.xi", f"must be > 0, got {self.xi}")


def passage_decay(m: float, s2: float, r: float) -> float:
    """Decay ``g`` with ``E[exp(-r tau_x)] = exp(-g x)`` for passage from ``x`` to 0."""
    if not s2 > 0:
        raise DegenerateDiffusion(f"variance rate must be positive, got {s2}")
    disc = math.sqrt(m * m + 2.0 * r * s2)
    return (m + disc) / s2 if m >= 0 else 2.0 * r / (disc - m)


def _policy_decay(params: ModelParams, reinsurance: Reinsurance, u: float) -> float:
    mu_u, s2_u = make_profile(params, reinsurance)(u)
    if s2_u == 0.0:
        # full reinsurance: deterministic descent at rate delta
        return params.r / params.delta
    return passage_decay(mu_u - params.delta, s2_u, params.r)


def renewal_cost(
    params: ModelParams, reinsurance: Reinsurance, policy: PolicySpec, x: float = 0.0
) -> float:
    """Expected discounted injection cost of ``policy`` started at surplus ``x``."""
    g = _policy_decay(params, reinsurance, policy.u)
    return float(_renewal(g, params.K + params.c * policy.xi, policy.xi, x))


def _renewal(g, cost, xi, x):
    return cost * np.exp(-g * x) / -np.expm1(-g * xi)


@dataclass(frozen=True)
class GridResult:
    best: PolicySpec
    best_cost: float
    u_grid: np.ndarray
    xi_grid: np.ndarray
    costs: np.ndarray  # shape (len(u_grid), len(xi_grid))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["u", "xi", "cost"])
            for i, u in enumerate(self.u_grid):
                for j, xi in enumerate(self.xi_grid):
                    w.writerow([repr(float(u)), repr(float(xi)), repr(float(self.costs[i, j]))])


def grid_optimize(
    params: ModelParams,
    reinsurance: Reinsurance,
    u_grid,
    xi_grid,
    x: float = 0.0,
) -> GridResult:
    """Exhaustive search for the cheapest constant policy on a ``(u, xi)`` grid.

    Ties go to the smaller ``u``, then the smaller ``xi``.
    """
    u_grid = np.asarray(u_grid, dtype=float)
    xi_grid = np.asarray(xi_grid, dtype=float)
    if u_grid.size == 0 or xi_grid.size == 0:
        raise InvalidParameter("grid", "u and xi grids must be non-empty")
    if np.any(xi_grid <= 0):
        raise InvalidParameter("xi_grid", "injection sizes must be positive")
    if np.any(u_grid < 0) or np.any(u_grid > reinsurance.u_max):
        raise InvalidParameter("u_grid", f"retentions must lie in [0, {reinsurance.u_max}]")
    g = np.array([_policy_decay(params, reinsurance, float(u)) for u in u_grid])
    costs = _renewal(g[:, None], params.K + params.c * xi_grid[None, :], xi_grid[None, :], x)
    # lexicographic tie-break on sorted grids
    order_u = np.argsort(u_grid, kind="stable")
    order_xi = np.argsort(xi_grid, kind="stable")
    sorted_costs = costs[np.ix_(order_u, order_xi)]
    flat = int(np.argmin(sorted_costs))
    i, j = np.unravel_index(flat, sorted_costs.shape)
    i, j = order_u[i], order_xi[j]
    return GridResult(
        PolicySpec(float(u_grid[i]), float(xi_grid[j])),
        float(costs[i, j]),
        u_grid,
        xi_grid,
        costs,
    )
