"""Closed-form solution of the QVIs for both reinsurance types.

In every regime the value function is ``A * exp(-k x)`` on ``x >= 0``. The
decay ``k`` comes from the HJB equation at the optimal retention, and the
amplitude ``A`` from the tightness of the intervention condition at zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InternalInconsistency, NoBracket, NonPositiveInjection
from .numerics import RootConfig, find_root_bracketed
from .risk_model import (
    EXCESS_OF_LOSS,
    PROPORTIONAL,
    DriftVolProfile,
    ModelParams,
    Reinsurance,
    make_profile,
)

PROPORTIONAL_LOW_DEBT = "ProportionalLowDebt"
PROPORTIONAL_HIGH_DEBT = "ProportionalHighDebt"
XL_INTERIOR = "XlInterior"
XL_BOUNDARY = "XlBoundary"

RANGE_SLACK = 1e-9
ROOT_CFG = RootConfig(abs_tol=1e-14, max_iter=500)


@dataclass(frozen=True)
class Regime:
    tag: str
    threshold: float

    @property
    def interior(self) -> bool:
        """True when the optimal retention is strictly inside the control region."""
        return self.tag in (PROPORTIONAL_LOW_DEBT, XL_INTERIOR)


@dataclass(frozen=True)
class Solution:
    regime: Regime
    decay: float
    amplitude: float
    u_star: float
    xi_star: float
    params: ModelParams
    reinsurance: Reinsurance

    def value(self, x):
        """Minimal cost at surplus ``x``; negative ``x`` pays the shortfall up front."""
        return value_at(self, x)

    @property
    def profile(self) -> DriftVolProfile:
        return make_profile(self.params, self.reinsurance)


def debt_threshold(params: ModelParams, reinsurance: Reinsurance) -> float:
    """Debt rate at which the optimal retention reaches the top of the control region."""
    mu, s2, r = params.mu, params.sigma2, params.r
    if reinsurance.kind == PROPORTIONAL:
        return (mu * mu + 2.0 * r * s2) / (2.0 * mu)
    N = reinsurance.u_max
    if math.isinf(N):
        return math.inf
    return mu + r * N - s2 / (2.0 * N)


def classify_regime(params: ModelParams, reinsurance: Reinsurance) -> Regime:
    threshold = debt_threshold(params, reinsurance)
    low = params.delta < threshold
    if reinsurance.kind == PROPORTIONAL:
        return Regime(PROPORTIONAL_LOW_DEBT if low else PROPORTIONAL_HIGH_DEBT, threshold)
    return Regime(XL_INTERIOR if low else XL_BOUNDARY, threshold)


def characteristic_root(drift: float, s2: float, r: float) -> float:
    """Positive root of ``s2/2 k^2 - drift k - r = 0``.

    Both signs of ``drift`` use the cancellation-free branch of the quadratic
    formula.
    """
    disc = math.sqrt(drift * drift + 2.0 * r * s2)
    if drift >= 0:
        return (drift + disc) / s2
    return 2.0 * r / (disc - drift)


def j_function(params: ModelParams, profile: DriftVolProfile, u: float) -> float:
    """``sigma^2(u)/(2u) - mu(u) - r u + delta``; its zero is the optimal XL retention."""
    return profile.sigma2_of(u) / (2.0 * u) - profile.mu_of(u) - params.r * u + params.delta


def _xl_retention(params: ModelParams, profile: DriftVolProfile) -> float:
    N = profile.u_max
    J = lambda u: j_function(params, profile, u)
    lo = min(1e-9, N / 2) if math.isfinite(N) else 1e-9
    if math.isfinite(N):
        hi = N
    else:
        hi = 1.0
        while J(hi) > 0:
            hi *= 2.0
            if hi > 1e300:
                raise NoBracket("J stays positive; no interior retention")
    if J(lo) <= 0 or J(hi) >= 0:
        raise NoBracket(
            f"J has no sign change on [{lo}, {hi}] (J={J(lo)}, {J(hi)}); regime misclassified?"
        )
    return find_root_bracketed(J, lo, hi, ROOT_CFG)


def decay_rate(params: ModelParams, reinsurance: Reinsurance, regime: Regime) -> float:
    if regime.tag == PROPORTIONAL_LOW_DEBT:
        return (params.r + params.mu**2 / (2.0 * params.sigma2)) / params.delta
    if regime.tag in (PROPORTIONAL_HIGH_DEBT, XL_BOUNDARY):
        return characteristic_root(params.mu - params.delta, params.sigma2, params.r)
    return 1.0 / _xl_retention(params, make_profile(params, reinsurance))


def amplitude_equation(A: float, decay: float, c: float, K: float) -> float:
    """Zero exactly when ``A = K + c xi + A exp(-decay xi)`` at the optimal ``xi``."""
    return K + c / decay * math.log(A * decay / c) + c / decay - A


def solve_amplitude(decay: float, c: float, K: float) -> float:
    """Unique root of the amplitude equation on ``(c/decay, inf)``."""
    lo = c / decay * (1.0 + 1e-9)
    f = lambda A: amplitude_equation(A, decay, c, K)
    if f(lo) <= 0:
        # K is below the resolution of the bracket start
        return lo
    hi = 2.0 * lo
    while f(hi) >= 0:
        hi *= 2.0
    return find_root_bracketed(f, lo, hi, RootConfig(abs_tol=1e-15 * hi, max_iter=500))


def optimal_retention(
    params: ModelParams, reinsurance: Reinsurance, regime: Regime, decay: float
) -> float:
    if regime.tag == PROPORTIONAL_LOW_DEBT:
        u, hi = params.mu / (params.sigma2 * decay), 1.0
    elif regime.tag == XL_INTERIOR:
        u, hi = 1.0 / decay, reinsurance.u_max
    elif regime.tag == PROPORTIONAL_HIGH_DEBT:
        return 1.0
    else:
        return reinsurance.u_max
    if not 0.0 < u < hi + RANGE_SLACK:
        raise InternalInconsistency(f"optimal retention {u} outside (0, {hi}) for {regime.tag}")
    return min(u, hi)


def optimal_injection(amplitude: float, decay: float, c: float) -> float:
    if not amplitude > c / decay:
        raise NonPositiveInjection(
            f"amplitude {amplitude} must exceed c/decay = {c / decay} for a positive injection"
        )
    return math.log(amplitude * decay / c) / decay


def solve(
    params: ModelParams, reinsurance: Reinsurance, *, decay: float | None = None
) -> Solution:
    """Optimal policy and value function.

    ``decay`` overrides the computed decay rate; the amplitude, retention and
    injection are then derived from it as usual. Used to examine externally
    supplied candidates.
    """
    regime = classify_regime(params, reinsurance)
    if decay is None:
        decay = decay_rate(params, reinsurance, regime)
    amplitude = solve_amplitude(decay, params.c, params.K)
    u_star = optimal_retention(params, reinsurance, regime, decay)
    xi_star = optimal_injection(amplitude, decay, params.c)
    return Solution(regime, decay, amplitude, u_star, xi_star, params, reinsurance)


def value_at(sol: Solution, x):
    x = np.asarray(x, dtype=float)
    pos = sol.amplitude * np.exp(-sol.decay * np.maximum(x, 0.0))
    out = np.where(x >= 0, pos, sol.amplitude - sol.params.c * x)
    return float(out) if out.ndim == 0 else out
