"""Monte Carlo estimate of the discounted injection cost of a constant policy.

Paths follow an Euler scheme for the controlled diffusion. Ruin is detected
at step boundaries; the injection is then charged from level zero, so the
surplus restarts at exactly ``xi`` and the overshoot below zero is treated as
discretisation error (it shrinks like ``sqrt(dt)``).

Each path draws its normals from its own Philox stream keyed by
``(seed, path index)``, so results do not depend on how paths are scheduled
across worker threads.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np

from .cost_oracle import PolicySpec, _policy_decay, renewal_cost
from .errors import InvalidParameter
from .qvi_solver import solve
from .risk_model import ModelParams, Reinsurance, make_profile

CHUNK = 8192
THREADS_ENV = "RUINLESS_THREADS"


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings.

    ``horizon=None`` picks the horizon at which the discarded tail is at most
    0.1% of the optimal cost. Paths also stop early once the expected
    remaining discounted cost falls below ``escape_rtol`` times the policy's
    cost from zero. ``substeps`` combines that many normals per step, which
    couples a run at ``dt`` with one at ``dt / substeps`` on the same seed.
    """

    dt: float = 1e-4
    horizon: float | None = None
    n_paths: int = 20_000
    seed: int = 0
    antithetic: bool = False
    escape_rtol: float = 1e-10
    substeps: int = 1
    workers: int | None = None

    def __post_init__(self):
        if not self.dt > 0:
            raise InvalidParameter("dt", "must be > 0")
        if self.horizon is not None and self.horizon < 100 * self.dt:
            raise InvalidParameter("horizon", "must be at least 100 * dt")
        if self.n_paths < 1:
            raise InvalidParameter("n_paths", "must be >= 1")
        if self.antithetic and self.n_paths % 2:
            raise InvalidParameter("n_paths", "must be even with antithetic sampling")
        if not 0 <= self.seed < 2**64:
            raise InvalidParameter("seed", "must be an unsigned 64-bit integer")
        if self.substeps < 1:
            raise InvalidParameter("substeps", "must be >= 1")
        if not 0 < self.escape_rtol < 1:
            raise InvalidParameter("escape_rtol", "must lie in (0, 1)")


@dataclass
class SimResult:
    mean_cost: float
    std_error: float
    injections_per_path: float
    truncation_bound: float
    paths_used: int
    horizon: float
    dt: float
    path_costs: np.ndarray = field(repr=False)
    path_injections: np.ndarray = field(repr=False)
    antithetic: bool = False

    def to_dict(self) -> dict:
        return {
            "mean_cost": self.mean_cost,
            "std_error": self.std_error,
            "injections_per_path": self.injections_per_path,
            "truncation_bound": self.truncation_bound,
            "paths_used": self.paths_used,
            "horizon": self.horizon,
            "dt": self.dt,
        }

    def dump_paths(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["path", "cost", "injections"])
            for i, (cst, n) in enumerate(zip(self.path_costs, self.path_injections)):
                w.writerow([i, repr(float(cst)), int(n)])

    def samples(self) -> np.ndarray:
        """Independent samples: path costs, or antithetic pair means."""
        if self.antithetic:
            return 0.5 * (self.path_costs[0::2] + self.path_costs[1::2])
        return self.path_costs


@numba.njit(nogil=True, cache=True)
def _advance(x, k, dsum, ninj, z, drift_dt, vol_sqdt, xi, r, dt, n_steps, escape_g, log_tol):
    """Run one path over the normals ``z``; returns the new state and a done flag."""
    for i in range(z.shape[0]):
        if k >= n_steps:
            return x, k, dsum, ninj, True
        x += drift_dt + vol_sqdt * z[i]
        k += 1
        if x <= 0.0:
            # discount at the left end of the step that crossed
            dsum += math.exp(-r * (k - 1) * dt)
            ninj += 1
            x = xi
        elif escape_g > 0.0 and x * escape_g > -r * k * dt - log_tol:
            return x, k, dsum, ninj, True
    return x, k, dsum, ninj, k >= n_steps


def _stream(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=(seed << 64) | index))


def _normals(gen: np.random.Generator, n: int, substeps: int, sign: float) -> np.ndarray:
    if substeps == 1:
        z = gen.standard_normal(n)
    else:
        z = gen.standard_normal(n * substeps).reshape(n, substeps).sum(axis=1)
        z /= math.sqrt(substeps)
    return z if sign > 0 else -z


def default_horizon(params, reinsurance, policy) -> float:
    """Horizon making the omitted tail at most 0.1% of the optimal cost from zero."""
    v0 = solve(params, reinsurance).amplitude
    c0 = renewal_cost(params, reinsurance, policy, 0.0)
    return max(math.log(c0 / (1e-3 * v0)), math.log(1e3)) / params.r


def _worker_count(cfg: SimConfig) -> int:
    n = cfg.workers or os.cpu_count() or 1
    cap = os.environ.get(THREADS_ENV)
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, n)


def simulate(
    params: ModelParams,
    reinsurance: Reinsurance,
    policy: PolicySpec,
    x0: float,
    cfg: SimConfig,
) -> SimResult:
    if x0 < 0:
        raise InvalidParameter("x0", "initial surplus must be >= 0")
    mu_u, s2_u = make_profile(params, reinsurance)(policy.u)
    horizon = cfg.horizon if cfg.horizon is not None else default_horizon(params, reinsurance, policy)
    n_steps = int(math.ceil(horizon / cfg.dt - 1e-9))
    drift_dt = (mu_u - params.delta) * cfg.dt
    vol_sqdt = math.sqrt(s2_u * cfg.dt)
    escape_g = _policy_decay(params, reinsurance, policy.u)
    log_tol = math.log(cfg.escape_rtol)
    r, dt, xi = params.r, cfg.dt, policy.xi

    dsums = np.zeros(cfg.n_paths)
    counts = np.zeros(cfg.n_paths, dtype=np.int64)

    def run_path(p: int) -> None:
        stream, sign = (p // 2, -1.0 if p % 2 else 1.0) if cfg.antithetic else (p, 1.0)
        gen = _stream(cfg.seed, stream)
        x, k, dsum, ninj = float(x0), 0, 0.0, 0
        if x <= 0.0:
            dsum, ninj, x = 1.0, 1, xi
        done = False
        while not done:
            z = _normals(gen, CHUNK, cfg.substeps, sign)
            x, k, dsum, ninj, done = _advance(
                x, k, dsum, ninj, z, drift_dt, vol_sqdt, xi, r, dt, n_steps, escape_g, log_tol
            )
        dsums[p] = dsum
        counts[p] = ninj

    def run_block(block: range) -> None:
        for p in block:
            run_path(p)

    workers = _worker_count(cfg)
    bounds = np.linspace(0, cfg.n_paths, workers + 1).astype(int)
    blocks = [range(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    if len(blocks) == 1:
        run_block(blocks[0])
    else:
        with ThreadPoolExecutor(max_workers=len(blocks)) as pool:
            list(pool.map(run_block, blocks))

    costs = (params.K + params.c * xi) * dsums
    result = SimResult(
        mean_cost=0.0,
        std_error=0.0,
        injections_per_path=float(np.mean(counts)),
        truncation_bound=0.0,
        paths_used=cfg.n_paths,
        horizon=n_steps * dt,
        dt=dt,
        path_costs=costs,
        path_injections=counts,
        antithetic=cfg.antithetic,
    )
    samples = result.samples()
    result.mean_cost = float(np.sum(samples) / samples.size)
    result.std_error = (
        float(np.std(samples, ddof=1) / math.sqrt(samples.size)) if samples.size > 1 else 0.0
    )
    c0 = renewal_cost(params, reinsurance, policy, 0.0)
    result.truncation_bound = float(math.exp(-r * n_steps * dt) * c0 + cfg.escape_rtol * c0)
    return result


@dataclass
class PolicyComparison:
    policies: list
    results: list
    diff_mean: np.ndarray  # diff_mean[i, j] = mean_i - mean_j
    diff_se: np.ndarray

    @property
    def best(self) -> int:
        return int(np.argmin([res.mean_cost for res in self.results]))

    def lowest_within_noise(self, i: int, z: float = 2.0) -> bool:
        """True if policy ``i`` is not beaten by any other beyond ``z`` standard errors."""
        return bool(np.all(self.diff_mean[i] <= z * self.diff_se[i]))

    def to_dict(self) -> dict:
        return {
            "policies": [{"u": p.u, "xi": p.xi} for p in self.policies],
            "results": [res.to_dict() for res in self.results],
            "diff_mean": self.diff_mean.tolist(),
            "diff_se": self.diff_se.tolist(),
            "best": self.best,
        }


def compare_policies(
    params: ModelParams,
    reinsurance: Reinsurance,
    policies,
    x0: float,
    cfg: SimConfig,
) -> PolicyComparison:
    """Simulate each policy on common random numbers and tabulate the differences."""
    policies = list(policies)
    if not policies:
        raise InvalidParameter("policies", "need at least one policy")
    results = [simulate(params, reinsurance, p, x0, cfg) for p in policies]
    n = len(results)
    diff_mean, diff_se = np.zeros((n, n)), np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            d = results[i].samples() - results[j].samples()
            diff_mean[i, j] = float(np.mean(d))
            diff_se[i, j] = float(np.std(d, ddof=1) / math.sqrt(d.size)) if d.size > 1 else 0.0
    return PolicyComparison(policies, results, diff_mean, diff_se)


@dataclass
class HalvingStudy:
    target: float
    coarse: SimResult
    fine: SimResult

    @property
    def coarse_bias(self) -> float:
        return self.coarse.mean_cost - self.target

    @property
    def fine_bias(self) -> float:
        return self.fine.mean_cost - self.target

    @property
    def bias_shrinks(self) -> bool:
        return abs(self.fine_bias) < abs(self.coarse_bias)

    def to_dict(self) -> dict:
        return {
            "target": self.target,
            "coarse_dt": self.coarse.dt,
            "fine_dt": self.fine.dt,
            "coarse_bias": self.coarse_bias,
            "fine_bias": self.fine_bias,
            "ratio": self.coarse_bias / self.fine_bias if self.fine_bias else math.inf,
        }


def dt_halving_study(params, reinsurance, policy, x0, cfg: SimConfig) -> HalvingStudy:
    """Bias against the exact renewal cost at ``dt`` and ``dt / 2`` on coupled paths.

    The coarse run sums pairs of the fine run's normals, so both share one
    Brownian path per index and their difference isolates discretisation
    bias from sampling noise.
    """
    from dataclasses import replace

    target = renewal_cost(params, reinsurance, policy, x0)
    horizon = cfg.horizon if cfg.horizon is not None else default_horizon(params, reinsurance, policy)
    coarse = simulate(params, reinsurance, policy, x0,
                      replace(cfg, horizon=horizon, substeps=2 * cfg.substeps))
    fine = simulate(params, reinsurance, policy, x0,
                    replace(cfg, horizon=horizon, dt=cfg.dt / 2))
    return HalvingStudy(target, coarse, fine)


def trace_path(
    params: ModelParams,
    reinsurance: Reinsurance,
    policy: PolicySpec,
    x0: float,
    dt: float,
    n_steps: int,
    seed: int = 0,
    path_index: int = 0,
) -> dict:
    """Record one path step by step, on the same random stream ``simulate`` uses.

    Returns the pre-reset levels, the step indices at which injections fired,
    and the level right after each step.
    """
    mu_u, s2_u = make_profile(params, reinsurance)(policy.u)
    z = _stream(seed, path_index).standard_normal(n_steps)
    drift_dt, vol = (mu_u - params.delta) * dt, math.sqrt(s2_u * dt)
    raw = np.empty(n_steps)
    after = np.empty(n_steps)
    injections = []
    x = x0 if x0 > 0 else policy.xi
    for i in range(n_steps):
        x += drift_dt + vol * z[i]
        raw[i] = x
        if x <= 0.0:
            injections.append(i)
            x = policy.xi
        after[i] = x
    return {
        "raw": raw,
        "after": after,
        "injections": np.array(injections, dtype=int),
        "max_step": abs(drift_dt) + vol * float(np.max(np.abs(z))) if n_steps else 0.0,
    }
