"""Model primitives: parameters, claim distributions and drift/volatility profiles.

Claim arrival intensity is normalised to one, so the diffusion coefficients
are the first two moments of the (retained) claim size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Literal, Union

import numpy as np

from .errors import (
    DegenerateLiability,
    InvalidParameter,
    ModelError,
    MomentMismatch,
    OutOfRegion,
)
from .numerics import integrate, simpson_segments

PROPORTIONAL = "proportional"
EXCESS_OF_LOSS = "excess_of_loss"

MOMENT_RTOL = 1e-9


@dataclass(frozen=True)
class ModelParams:
    """Market and cost primitives.

    Attributes
    ----------
    mu : float
        Drift of the uncontrolled surplus (premium minus expected claims).
    sigma : float
        Volatility of the uncontrolled surplus.
    delta : float
        Debt liability rate paid out of the surplus.
    r : float
        Discount rate.
    c : float
        Proportional injection cost, cash raised per unit of surplus added.
    K : float
        Fixed set-up cost of each injection.
    """

    mu: float
    sigma: float
    delta: float
    r: float
    c: float
    K: float

    def __post_init__(self):
        validate(self)

    @property
    def sigma2(self) -> float:
        return self.sigma * self.sigma

    @classmethod
    def from_claims(cls, claims: "ClaimDistribution", *, delta, r, c, K) -> "ModelParams":
        """Parameters whose (mu, sigma) are the moments of ``claims``."""
        mu, s2 = claims.moments(claims.support_bound)
        return cls(mu=mu, sigma=math.sqrt(s2), delta=delta, r=r, c=c, K=K)

    def replace(self, **changes) -> "ModelParams":
        values = {k: getattr(self, k) for k in ("mu", "sigma", "delta", "r", "c", "K")}
        values.update(changes)
        return ModelParams(**values)


def validate(params) -> None:
    """Check the parameter bounds, raising on the first violation."""
    for name in ("mu", "sigma", "delta", "r", "c", "K"):
        value = getattr(params, name)
        if not isinstance(value, (int, float)) or not math.isfinite(value):
            raise InvalidParameter(name, f"must be a finite number, got {value!r}")
    if params.delta <= 0:
        raise DegenerateLiability(
            f"delta={params.delta}: without debt liability the problem is trivial "
            "(full reinsurance, no injections, V = 0)"
        )
    if params.mu <= 0:
        raise InvalidParameter("mu", f"must be > 0, got {params.mu}")
    if params.sigma <= 0:
        raise InvalidParameter("sigma", f"must be > 0, got {params.sigma}")
    if params.r <= 0:
        raise InvalidParameter("r", f"must be > 0, got {params.r}")
    if params.c < 1:
        raise InvalidParameter("c", f"must be >= 1, got {params.c}")
    if params.K <= 0:
        raise InvalidParameter("K", f"must be > 0, got {params.K}")


# ---------------------------------------------------------------------------
# Claim distributions
# ---------------------------------------------------------------------------


def _one_minus_exp_times_1py(y):
    """1 - e^{-y}(1 + y) without cancellation for small y."""
    if y < 1e-2:
        total, term = 0.0, 1.0
        for k in range(1, 10):
            term *= y / k
            if k >= 2:
                total += (-1) ** k * (k - 1) * term
        return total
    return -math.expm1(-y) - y * math.exp(-y)


@dataclass(frozen=True)
class Exponential:
    theta: float

    def __post_init__(self):
        if not self.theta > 0:
            raise InvalidParameter("theta", f"must be > 0, got {self.theta}")

    @property
    def support_bound(self) -> float:
        return math.inf

    def survival(self, x: float) -> float:
        return math.exp(-self.theta * x)

    def moments(self, u: float) -> tuple[float, float]:
        th = self.theta
        if math.isinf(u):
            return 1.0 / th, 2.0 / th**2
        y = th * u
        return -math.expm1(-y) / th, 2.0 / th**2 * _one_minus_exp_times_1py(y)

    def to_dict(self) -> dict:
        return {"type": "exponential", "theta": self.theta}


@dataclass(frozen=True)
class Pareto:
    """Lomax-type Pareto claims with survival (b / (x + b))^a."""

    a: float
    b: float

    def __post_init__(self):
        if not self.a > 2:
            raise InvalidParameter("a", f"must be > 2 for a finite second moment, got {self.a}")
        if not self.b > 0:
            raise InvalidParameter("b", f"must be > 0, got {self.b}")

    @property
    def support_bound(self) -> float:
        return math.inf

    def survival(self, x: float) -> float:
        return (self.b / (x + self.b)) ** self.a

    def moments(self, u: float) -> tuple[float, float]:
        a, b = self.a, self.b
        if math.isinf(u):
            return b / (a - 1.0), 2.0 * b * b / ((a - 1.0) * (a - 2.0))
        t = u / b
        log_q = -math.log1p(t)
        mu = b / (a - 1.0) * -math.expm1((a - 1.0) * log_q)
        if t < 0.05:
            # binomial series of 2x(1 + x/b)^-a, integrated term by term
            s2, coef = 0.0, 1.0
            for k in range(40):
                s2 += coef * t**k / (k + 2)
                coef *= -(a + k) / (k + 1)
            s2 *= 2.0 * u * u
        else:
            inner = -math.expm1((a - 2.0) * log_q) - (a - 2.0) * t * math.exp((a - 1.0) * log_q)
            s2 = 2.0 * b * b / ((a - 1.0) * (a - 2.0)) * inner
        return mu, s2

    def to_dict(self) -> dict:
        return {"type": "pareto", "a": self.a, "b": self.b}


@dataclass(frozen=True, eq=False)
class Tabulated:
    """Survival function given on a grid, linearly interpolated.

    The grid must start at ``x = 0`` with survival 1. Beyond the last grid
    point the survival is zero, so the support bound is the last abscissa.
    """

    points: tuple
    _x: np.ndarray = field(init=False, repr=False)
    _s: np.ndarray = field(init=False, repr=False)
    _cum_mu: np.ndarray = field(init=False, repr=False)
    _cum_s2: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise InvalidParameter("points", "need at least two (x, survival) pairs")
        x, s = pts[:, 0], pts[:, 1]
        if x[0] != 0.0 or s[0] != 1.0:
            raise InvalidParameter("points", "grid must start at (0, 1)")
        if np.any(np.diff(x) <= 0):
            raise InvalidParameter("points", "x must be strictly increasing")
        if np.any(np.diff(s) > 0) or np.any(s < 0) or np.any(s > 1):
            raise InvalidParameter("points", "survival must be non-increasing within [0, 1]")
        x.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "_x", x)
        object.__setattr__(self, "_s", s)
        seg_mu = simpson_segments(self._interp, x)
        seg_s2 = simpson_segments(lambda t: 2.0 * t * self._interp(t), x)
        object.__setattr__(self, "_cum_mu", np.concatenate([[0.0], np.cumsum(seg_mu)]))
        object.__setattr__(self, "_cum_s2", np.concatenate([[0.0], np.cumsum(seg_s2)]))

    @classmethod
    def from_survival(cls, survival: Callable[[np.ndarray], np.ndarray], grid) -> "Tabulated":
        grid = np.asarray(grid, dtype=float)
        s = np.minimum.accumulate(np.clip(survival(grid), 0.0, 1.0))
        s[0] = 1.0
        return cls(tuple(zip(grid.tolist(), s.tolist())))

    def _interp(self, t):
        return np.interp(t, self._x, self._s, right=0.0)

    @property
    def support_bound(self) -> float:
        return float(self._x[-1])

    def survival(self, x: float) -> float:
        if x > self._x[-1]:
            return 0.0
        return float(self._interp(x))

    def moments(self, u: float) -> tuple[float, float]:
        j = int(np.searchsorted(self._x, u, side="right")) - 1
        j = min(j, len(self._x) - 1)
        mu, s2 = float(self._cum_mu[j]), float(self._cum_s2[j])
        lo = float(self._x[j])
        if u > lo:
            mu += integrate(lambda t: float(self._interp(t)), lo, u)
            s2 += integrate(lambda t: 2.0 * t * float(self._interp(t)), lo, u)
        return mu, s2

    def to_dict(self) -> dict:
        return {"type": "tabulated", "points": [list(p) for p in self.points]}

    def __eq__(self, other):
        return isinstance(other, Tabulated) and np.array_equal(
            np.asarray(self.points), np.asarray(other.points)
        )

    def __hash__(self):
        return hash(tuple(map(tuple, np.asarray(self.points).tolist())))


ClaimDistribution = Union[Exponential, Pareto, Tabulated]


def distribution_from_dict(spec: dict) -> ClaimDistribution:
    """Build a distribution from its config form, e.g. ``{"type": "pareto", "a": 3, "b": 1}``."""
    spec = dict(spec)
    kind = spec.pop("type", None)
    builders = {
        "exponential": (Exponential, {"theta"}),
        "pareto": (Pareto, {"a", "b"}),
        "tabulated": (lambda points: Tabulated(tuple(map(tuple, points))), {"points"}),
    }
    if kind not in builders:
        raise InvalidParameter("claims.type", f"unknown distribution type {kind!r}")
    build, keys = builders[kind]
    if set(spec) != keys:
        extra, missing = set(spec) - keys, keys - set(spec)
        raise InvalidParameter(
            "claims", f"{kind} takes {sorted(keys)}; unknown {sorted(extra)}, missing {sorted(missing)}"
        )
    return build(**spec)


def survival(dist: ClaimDistribution, x: float) -> float:
    if x < 0:
        raise ValueError("survival requires x >= 0")
    return dist.survival(x)


def xl_truncated_moments(dist: ClaimDistribution, u: float) -> tuple[float, float]:
    """Retained drift and variance rate under an excess-of-loss retention ``u``.

    Returns ``(int_0^u S(x) dx, int_0^u 2x S(x) dx)`` with ``S`` the survival
    function; at the support bound these are the first two claim moments.
    """
    if not 0 <= u <= dist.support_bound:
        raise OutOfRegion(f"retention {u} outside [0, {dist.support_bound}]")
    if u == 0:
        return 0.0, 0.0
    return dist.moments(u)


# ---------------------------------------------------------------------------
# Reinsurance profiles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Reinsurance:
    """Reinsurance type, plus the claim distribution for excess-of-loss."""

    kind: Literal["proportional", "excess_of_loss"]
    claims: ClaimDistribution | None = None

    def __post_init__(self):
        if self.kind not in (PROPORTIONAL, EXCESS_OF_LOSS):
            raise InvalidParameter("reinsurance.kind", f"unknown kind {self.kind!r}")
        if self.kind == EXCESS_OF_LOSS and self.claims is None:
            raise InvalidParameter("reinsurance.claims", "excess-of-loss needs a claim distribution")
        if self.kind == PROPORTIONAL and self.claims is not None:
            raise InvalidParameter("reinsurance.claims", "proportional reinsurance takes no claims")

    @classmethod
    def proportional(cls) -> "Reinsurance":
        return cls(PROPORTIONAL)

    @classmethod
    def excess_of_loss(cls, claims: ClaimDistribution) -> "Reinsurance":
        return cls(EXCESS_OF_LOSS, claims)

    @property
    def u_max(self) -> float:
        return 1.0 if self.kind == PROPORTIONAL else self.claims.support_bound

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.claims is not None:
            out["claims"] = self.claims.to_dict()
        return out


@dataclass(frozen=True)
class DriftVolProfile:
    """Retained drift ``mu_of(u)`` and variance rate ``sigma2_of(u)`` on ``[0, u_max]``."""

    kind: str
    u_max: float
    mu_of: Callable[[float], float]
    sigma2_of: Callable[[float], float]

    def __call__(self, u: float) -> tuple[float, float]:
        if not 0 <= u <= self.u_max:
            raise OutOfRegion(f"retention {u} outside [0, {self.u_max}]")
        return self.mu_of(u), self.sigma2_of(u)


def make_profile(params: ModelParams, reinsurance: Reinsurance) -> DriftVolProfile:
    if reinsurance.kind == PROPORTIONAL:
        mu, s2 = params.mu, params.sigma2
        return DriftVolProfile(PROPORTIONAL, 1.0, lambda u: mu * u, lambda u: s2 * u * u)

    claims = reinsurance.claims
    m1, m2 = claims.moments(claims.support_bound)
    if not (
        math.isclose(params.mu, m1, rel_tol=MOMENT_RTOL)
        and math.isclose(params.sigma2, m2, rel_tol=MOMENT_RTOL)
    ):
        raise MomentMismatch(
            f"model (mu={params.mu}, sigma^2={params.sigma2}) does not match claim moments "
            f"({m1}, {m2})"
        )
    return DriftVolProfile(
        EXCESS_OF_LOSS,
        claims.support_bound,
        lambda u: xl_truncated_moments(claims, u)[0],
        lambda u: xl_truncated_moments(claims, u)[1],
    )


__all__ = [
    "ClaimDistribution",
    "DriftVolProfile",
    "EXCESS_OF_LOSS",
    "Exponential",
    "ModelError",
    "ModelParams",
    "PROPORTIONAL",
    "Pareto",
    "Reinsurance",
    "Tabulated",
    "distribution_from_dict",
    "make_profile",
    "survival",
    "validate",
    "xl_truncated_moments",
]
