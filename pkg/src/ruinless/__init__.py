"""Optimal reinsurance and capital injection for a Brownian surplus kept above zero."""

from .cost_oracle import PolicySpec, grid_optimize, passage_decay, renewal_cost
from .mc_simulator import SimConfig, SimResult, compare_policies, simulate
from .qvi_solver import Regime, Solution, classify_regime, solve, value_at
from .qvi_verifier import ResidualReport, verify
from .risk_model import (
    Exponential,
    ModelParams,
    Pareto,
    Reinsurance,
    Tabulated,
    make_profile,
    xl_truncated_moments,
)

__version__ = "0.1.0"
