"""Numerical check that a candidate solution satisfies the QVIs.

The checks run on a surplus grid:

* HJB inequality: ``min_u L^u V - r V >= 0``;
* intervention inequality: ``M V - V >= 0`` with ``M`` the inf-convolution;
* tightness: at every ``x`` one of the two holds with equality;
* boundary: ``M V(0) = V(0)``.

Upper bounds on V from the full-reinsurance policy are checked too.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .errors import CrossCheckFailure, QviViolation
from .qvi_solver import Solution, value_at
from .risk_model import PROPORTIONAL

INF_CONV_RTOL = 1e-8
FD_STEP = 1e-5
FD_RTOL = 1e-4


def generator_residual(sol: Solution, u: float, x: float) -> float:
    """``(L^u V)(x) - r V(x)`` using the exact derivatives of the exponential V."""
    mu_u, s2_u = sol.profile(u)
    k, v = sol.decay, value_at(sol, x)
    return v * (0.5 * s2_u * k * k - (mu_u - sol.params.delta) * k - sol.params.r)


def analytic_minimizer(sol: Solution) -> float:
    """Unconstrained minimiser of the generator residual in ``u``, clamped to the region."""
    if sol.reinsurance.kind == PROPORTIONAL:
        u = sol.params.mu / (sol.params.sigma2 * sol.decay)
    else:
        u = 1.0 / sol.decay
    return min(max(u, 0.0), sol.reinsurance.u_max)


def _u_search_bound(sol: Solution) -> float:
    u_max = sol.reinsurance.u_max
    if math.isinf(u_max):
        return 10.0 / sol.decay
    return u_max


def hjb_min_residual(
    sol: Solution,
    x: float,
    u_grid_size: int = 201,
    *,
    refine: bool = True,
    include_analytic: bool = True,
) -> tuple[float, float]:
    """Minimum over retentions of the generator residual at ``x``.

    Scans a uniform grid, a finer grid around the analytic minimiser, and the
    analytic minimiser itself. Returns ``(min residual, argmin u)``.
    """
    if u_grid_size < 3:
        raise ValueError("u_grid_size must be >= 3")
    hi = _u_search_bound(sol)
    us = [np.linspace(0.0, hi, u_grid_size)]
    u_hat = analytic_minimizer(sol)
    if refine:
        step = hi / (u_grid_size - 1)
        us.append(np.clip(np.linspace(u_hat - step, u_hat + step, 21), 0.0, hi))
    if include_analytic:
        us.append(np.array([u_hat]))
    grid = np.unique(np.concatenate(us))
    res = np.array([generator_residual(sol, float(u), x) for u in grid])
    i = int(np.argmin(res))
    return float(res[i]), float(grid[i])


@dataclass(frozen=True)
class InfConvolution:
    value: float
    argmin: float
    attained: bool


def _closed_form_inf_conv(sol: Solution, x: float) -> InfConvolution:
    K, c = sol.params.K, sol.params.c
    if x < sol.xi_star:
        xi = sol.xi_star - x
        return InfConvolution(K + c * xi + value_at(sol, sol.xi_star), xi, True)
    # infimum over xi > 0 is the xi -> 0+ limit
    return InfConvolution(K + value_at(sol, x), 0.0, False)


def inf_convolution(sol: Solution, x: float) -> InfConvolution:
    """``inf_{xi > 0} [K + c xi + V(x + xi)]``, closed form cross-checked numerically."""
    if x < 0:
        raise ValueError("inf_convolution requires x >= 0")
    exact = _closed_form_inf_conv(sol, x)
    K, c = sol.params.K, sol.params.c
    obj = lambda xi: K + c * xi + value_at(sol, x + xi)
    upper = 2.0 * max(sol.xi_star, 1.0 / sol.decay) + x
    num = optimize.minimize_scalar(obj, bounds=(0.0, upper), method="bounded",
                                   options={"xatol": 1e-12, "maxiter": 1000})
    # the bounded search never returns an endpoint; compare with the limit there too
    num_value = min(float(num.fun), K + value_at(sol, x))
    if not math.isclose(num_value, exact.value, rel_tol=INF_CONV_RTOL):
        raise CrossCheckFailure(
            f"inf-convolution at x={x}: closed form {exact.value} vs numerical {num_value}"
        )
    return exact


def lemma_bounds(sol: Solution, xi_grid, x_grid) -> dict:
    """Slack in the full-reinsurance upper bounds (non-negative means satisfied).

    With no retained risk the surplus falls at rate delta, so injecting
    ``xi`` at each ruin costs ``g(xi) / (1 - exp(-r xi / delta))`` from zero
    and ``g(xi) exp(-r xi / delta) / (1 - exp(-r xi / delta))`` from ``xi``.
    ``v0_slack`` is the worst of the first bound against V(0) over
    ``xi_grid``, ``vxi_slack`` the worst of the second against V(xi), and
    ``decay_slack`` the worst of ``V(0) exp(-r x / delta) - V(x)`` on
    ``x_grid``.
    """
    p = sol.params
    xi = np.asarray(xi_grid, dtype=float)
    rho = p.r / p.delta
    from_zero = (p.K + p.c * xi) / -np.expm1(-rho * xi)
    from_xi = from_zero * np.exp(-rho * xi)
    v0 = value_at(sol, 0.0)
    x = np.asarray(x_grid, dtype=float)
    return {
        "v0": v0,
        "v0_bound": float(np.min(from_zero)),
        "v0_slack": float(np.min(from_zero) - v0),
        "vxi_slack": float(np.min(from_xi - value_at(sol, xi))),
        "decay_slack": float(np.min(v0 * np.exp(-rho * x) - value_at(sol, x))),
    }


def derivative_check(sol: Solution, x: float) -> float:
    """Worst relative mismatch between exact and central-difference derivatives of V."""
    # slow decays need a longer step or V'' drowns in round-off
    h = FD_STEP * max(1.0, 1.0 / sol.decay)
    v = lambda t: value_at(sol, t)
    d1 = (v(x + h) - v(x - h)) / (2 * h)
    d2 = (v(x + h) - 2 * v(x) + v(x - h)) / (h * h)
    exact1, exact2 = -sol.decay * v(x), sol.decay**2 * v(x)
    return max(abs(d1 - exact1) / abs(exact1), abs(d2 - exact2) / abs(exact2))


@dataclass
class ResidualReport:
    x_grid: np.ndarray
    hjb_residuals: np.ndarray
    intervention_gaps: np.ndarray
    boundary_gap: float
    argmin_u: np.ndarray
    worst_violation: float
    tol_abs: float
    checks: dict = field(default_factory=dict)
    lemma: dict = field(default_factory=dict)
    fd_mismatch: float = 0.0

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "checks": dict(self.checks),
            "tol_abs": self.tol_abs,
            "worst_violation": self.worst_violation,
            "boundary_gap": self.boundary_gap,
            "worst_hjb_residual": float(np.min(self.hjb_residuals)),
            "max_abs_hjb_residual": float(np.max(np.abs(self.hjb_residuals))),
            "min_intervention_gap": float(np.min(self.intervention_gaps)),
            "lemma": dict(self.lemma),
            "fd_mismatch": self.fd_mismatch,
            "x_grid": self.x_grid.tolist(),
            "hjb_residuals": self.hjb_residuals.tolist(),
            "intervention_gaps": self.intervention_gaps.tolist(),
            "argmin_u": self.argmin_u.tolist(),
        }


def verify(
    sol: Solution,
    x_grid=None,
    u_grid_size: int = 201,
    *,
    lemma_xi_grid=None,
    raise_on_failure: bool = True,
) -> ResidualReport:
    """Run every QVI check on ``x_grid``; raises ``QviViolation`` on failure."""
    if x_grid is None:
        x_grid = np.linspace(0.0, 5.0 / sol.decay, 50)
    x_grid = np.asarray(x_grid, dtype=float)
    if x_grid.size == 0 or np.any(np.diff(x_grid) <= 0) or x_grid[0] < 0:
        raise ValueError("x_grid must be non-empty, non-negative and strictly increasing")
    if lemma_xi_grid is None:
        lemma_xi_grid = np.geomspace(1e-3, 1e2, 100) * max(sol.xi_star, sol.params.delta / sol.params.r)

    v0 = value_at(sol, 0.0)
    tol = 1e-7 * v0
    hjb, argmin, gaps = [], [], []
    for x in x_grid:
        res, u = hjb_min_residual(sol, float(x), u_grid_size)
        hjb.append(res)
        argmin.append(u)
        gaps.append(inf_convolution(sol, float(x)).value - value_at(sol, float(x)))
    hjb, argmin, gaps = np.array(hjb), np.array(argmin), np.array(gaps)
    boundary_gap = inf_convolution(sol, 0.0).value - v0
    tightness = np.minimum(np.abs(hjb), np.abs(gaps))

    lemma = lemma_bounds(sol, lemma_xi_grid, x_grid)
    fd = derivative_check(sol, float(x_grid[len(x_grid) // 2]) or 1.0 / sol.decay)

    checks = {
        "hjb_inequality": bool(np.min(hjb) >= -tol),
        "intervention_inequality": bool(np.min(gaps) >= -tol),
        "tightness": bool(np.max(tightness) <= tol),
        "boundary_tightness": abs(boundary_gap) <= tol,
        "lemma_v0_bound": lemma["v0_slack"] >= -tol,
        "lemma_vxi_bound": lemma["vxi_slack"] >= -tol,
        "lemma_decay_bound": lemma["decay_slack"] >= -tol,
        "finite_difference": fd <= FD_RTOL,
    }
    worst = min(float(np.min(hjb)), float(np.min(gaps)), -abs(boundary_gap), -float(np.max(tightness)))
    report = ResidualReport(
        x_grid, hjb, gaps, boundary_gap, argmin, worst, tol, checks, lemma, fd
    )
    if raise_on_failure and not report.passed:
        failed = [k for k, ok in checks.items() if not ok]
        i = int(np.argmax(tightness))
        raise QviViolation(
            f"QVI checks failed: {', '.join(failed)} (worst violation {worst:.6g})",
            report=report,
            worst={"x": float(x_grid[i]), "hjb": float(hjb[i]), "gap": float(gaps[i])},
        )
    return report
