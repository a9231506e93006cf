"""Command-line driver: ``ruinless {solve,verify,oracle,simulate,sweep} --config FILE``.

Exit codes: 0 ok, 2 bad config, 3 solver failure, 4 verification failure,
5 failed simulation check.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import cost_oracle, mc_simulator, qvi_solver, qvi_verifier
from .cost_oracle import PolicySpec
from .errors import ModelError, QviViolation, SolverError
from .risk_model import (
    EXCESS_OF_LOSS,
    ModelParams,
    Reinsurance,
    distribution_from_dict,
    make_profile,
)

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_VERIFY, EXIT_SIM = 0, 2, 3, 4, 5
MODEL_KEYS = ("mu", "sigma", "delta", "r", "c", "K")

BLOCK_KEYS = {
    "model": set(MODEL_KEYS),
    "reinsurance": {"kind", "claims"},
    "solution": {"decay"},
    "verify": {"x_grid", "u_grid_size", "lemma_xi_grid"},
    "oracle": {"u_grid", "xi_grid", "x", "csv"},
    "simulate": {
        "policy", "compare", "x0", "dt", "horizon", "n_paths", "seed",
        "antithetic", "workers", "escape_rtol", "check", "paths_csv",
    },
    "sweep": {"param", "start", "stop", "num", "values"},
}
CHECK_KEYS = {"target", "rel_tol", "halving", "halving_paths"}
GRID_KEYS = {"start", "stop", "num"}
ALIASES = {"decay": "solution.decay", "seed": "simulate.seed"}


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# config handling
# ---------------------------------------------------------------------------


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(cfg: dict, assignment: str) -> None:
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not of the form key=value")
    key, raw = assignment.split("=", 1)
    key = key.strip()
    if not key or any(not p for p in key.split(".")):
        raise ConfigError(f"override {assignment!r} has an empty key")
    if "." not in key:
        key = f"model.{key}" if key in MODEL_KEYS else ALIASES.get(key, key)
    parts = key.split(".")
    node = cfg
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {key}: {part} is not a block")
    node[parts[-1]] = _parse_value(raw)


def _check_keys(block: dict, allowed: set, where: str) -> None:
    if not isinstance(block, dict):
        raise ConfigError(f"{where}: expected an object")
    unknown = set(block) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {sorted(unknown)}")


def load_config(path, overrides=(), seed=None) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    for item in overrides:
        apply_override(cfg, item)
    if seed is not None:
        cfg.setdefault("simulate", {})["seed"] = seed
    _check_keys(cfg, set(BLOCK_KEYS), "config")
    for name, block in cfg.items():
        _check_keys(block, BLOCK_KEYS[name], name)
    if "check" in cfg.get("simulate", {}):
        _check_keys(cfg["simulate"]["check"], CHECK_KEYS, "simulate.check")
    for name in ("model", "reinsurance"):
        if name not in cfg:
            raise ConfigError(f"config: missing block {name!r}")
    return cfg


def build_model(cfg: dict) -> tuple[ModelParams, Reinsurance]:
    rblock = cfg["reinsurance"]
    kind = rblock.get("kind")
    claims = None
    if "claims" in rblock:
        claims = distribution_from_dict(rblock["claims"])
    reinsurance = Reinsurance(kind, claims)
    model = dict(cfg["model"])
    if kind == EXCESS_OF_LOSS and ("mu" not in model or "sigma" not in model):
        m1, m2 = claims.moments(claims.support_bound)
        model.setdefault("mu", m1)
        model.setdefault("sigma", math.sqrt(m2))
    missing = [k for k in MODEL_KEYS if k not in model]
    if missing:
        raise ConfigError(f"model: missing field(s) {missing}")
    params = ModelParams(**{k: model[k] for k in MODEL_KEYS})
    make_profile(params, reinsurance)
    return params, reinsurance


def _grid(spec, default_start=0.0, open_left=False) -> np.ndarray:
    if isinstance(spec, list):
        return np.asarray(spec, dtype=float)
    _check_keys(spec, GRID_KEYS, "grid")
    stop, num = float(spec["stop"]), int(spec["num"])
    if open_left and "start" not in spec:
        return np.linspace(stop / num, stop, num)
    return np.linspace(float(spec.get("start", default_start)), stop, num)


def _solve(cfg, params, reinsurance):
    decay = cfg.get("solution", {}).get("decay")
    return qvi_solver.solve(params, reinsurance, decay=decay)


# ---------------------------------------------------------------------------
# report formatting
# ---------------------------------------------------------------------------


def _clean(obj):
    """Make a report JSON-safe; non-finite values become null."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _emit_json(report: dict, out) -> None:
    text = json.dumps(_clean(report), indent=2, sort_keys=False) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def solution_report(sol: qvi_solver.Solution) -> dict:
    return {
        "regime": sol.regime.tag,
        "threshold": sol.regime.threshold,
        "decay": sol.decay,
        "amplitude": sol.amplitude,
        "u_star": sol.u_star,
        "xi_star": sol.xi_star,
        "value_at_0": sol.value(0.0),
    }


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_solve(cfg, args) -> int:
    params, reinsurance = build_model(cfg)
    sol = _solve(cfg, params, reinsurance)
    _emit_json(solution_report(sol), args.out)
    return EXIT_OK


def oracle_consistency(sol: qvi_solver.Solution, xs=(0.0, 0.5, 1.0, 5.0), rtol=1e-9) -> dict:
    """Agreement of the renewal representation with the solved value function."""
    params, reinsurance = sol.params, sol.reinsurance
    mu_u, s2_u = make_profile(params, reinsurance)(sol.u_star)
    g = cost_oracle.passage_decay(mu_u - params.delta, s2_u, params.r)
    pol = PolicySpec(sol.u_star, sol.xi_star)
    rel = [
        abs(cost_oracle.renewal_cost(params, reinsurance, pol, x) / sol.value(x) - 1.0) for x in xs
    ]
    return {
        "passage_decay": g,
        "decay_rel_error": abs(g / sol.decay - 1.0),
        "value_rel_error": max(rel),
        "decay_match": abs(g / sol.decay - 1.0) <= rtol,
        "value_match": max(rel) <= rtol,
    }


def cmd_verify(cfg, args) -> int:
    params, reinsurance = build_model(cfg)
    sol = _solve(cfg, params, reinsurance)
    block = cfg.get("verify", {})
    x_grid = _grid(block["x_grid"]) if "x_grid" in block else None
    lemma = _grid(block["lemma_xi_grid"], open_left=True) if "lemma_xi_grid" in block else None
    report = qvi_verifier.verify(
        sol,
        x_grid,
        int(block.get("u_grid_size", 201)),
        lemma_xi_grid=lemma,
        raise_on_failure=False,
    )
    oracle = oracle_consistency(sol)
    checks = dict(report.checks)
    checks["oracle_decay_match"] = oracle["decay_match"]
    checks["oracle_value_match"] = oracle["value_match"]
    passed = all(checks.values())
    out = {
        "passed": passed,
        "checks": checks,
        "solution": solution_report(sol),
        "qvi": report.to_dict(),
        "oracle": oracle,
    }
    _emit_json(out, args.out)
    return EXIT_OK if passed else EXIT_VERIFY


def cmd_oracle(cfg, args) -> int:
    params, reinsurance = build_model(cfg)
    sol = _solve(cfg, params, reinsurance)
    block = cfg.get("oracle", {})
    u_max = reinsurance.u_max if math.isfinite(reinsurance.u_max) else 4.0 * sol.u_star
    u_grid = _grid(block.get("u_grid", {"start": 0.0, "stop": u_max, "num": 400}))
    xi_grid = _grid(block.get("xi_grid", {"stop": 4.0 * sol.xi_star, "num": 400}), open_left=True)
    x = float(block.get("x", 0.0))
    t0 = time.perf_counter()
    res = cost_oracle.grid_optimize(params, reinsurance, u_grid, xi_grid, x)
    elapsed = time.perf_counter() - t0
    csv_path = block.get("csv") or (str(Path(args.out).with_suffix(".csv")) if args.out else None)
    if csv_path:
        res.to_csv(csv_path)
    v = sol.value(x)
    _emit_json(
        {
            "x": x,
            "grid_best": {"u": res.best.u, "xi": res.best.xi, "cost": res.best_cost},
            "solver": {"u_star": sol.u_star, "xi_star": sol.xi_star, "value": v},
            "cost_gap": res.best_cost - v,
            "grid_min_not_below_value": bool(np.min(res.costs) >= v * (1 - 1e-12)),
            "grid_shape": list(res.costs.shape),
            "csv": csv_path,
            "seconds": elapsed,
        },
        args.out,
    )
    return EXIT_OK


def _policy(spec, sol) -> PolicySpec:
    if spec in (None, "optimal"):
        return PolicySpec(sol.u_star, sol.xi_star)
    if not isinstance(spec, dict) or set(spec) - {"u", "xi"}:
        raise ConfigError("simulate.policy must be 'optimal' or {'u': .., 'xi': ..}")
    return PolicySpec(float(spec.get("u", sol.u_star)), float(spec.get("xi", sol.xi_star)))


def cmd_simulate(cfg, args) -> int:
    params, reinsurance = build_model(cfg)
    sol = _solve(cfg, params, reinsurance)
    block = cfg.get("simulate", {})
    sim_cfg = mc_simulator.SimConfig(
        dt=float(block.get("dt", 1e-4)),
        horizon=block.get("horizon"),
        n_paths=int(block.get("n_paths", 20_000)),
        seed=int(block.get("seed", 0)),
        antithetic=bool(block.get("antithetic", False)),
        escape_rtol=float(block.get("escape_rtol", 1e-10)),
        workers=block.get("workers"),
    )
    policy = _policy(block.get("policy"), sol)
    x0 = float(block.get("x0", 0.0))
    t0 = time.perf_counter()
    res = mc_simulator.simulate(params, reinsurance, policy, x0, sim_cfg)
    out = {
        "policy": {"u": policy.u, "xi": policy.xi},
        "x0": x0,
        "seed": sim_cfg.seed,
        "result": res.to_dict(),
        "renewal_cost": cost_oracle.renewal_cost(params, reinsurance, policy, x0),
        "seconds": time.perf_counter() - t0,
    }
    if block.get("paths_csv"):
        res.dump_paths(block["paths_csv"])
    if "compare" in block:
        policies = [_policy(p, sol) for p in block["compare"]]
        table = mc_simulator.compare_policies(params, reinsurance, policies, x0, sim_cfg)
        out["comparison"] = table.to_dict()
    status = EXIT_OK
    check = block.get("check")
    if check:
        target = check.get("target", "value")
        if target == "value":
            target = sol.value(x0)
        elif target == "renewal":
            target = out["renewal_cost"]
        target = float(target)
        allowed = max(3 * res.std_error, float(check.get("rel_tol", 0.01)) * target)
        allowed += res.truncation_bound
        ok = abs(res.mean_cost - target) <= allowed
        out["check"] = {"target": target, "error": res.mean_cost - target, "allowed": allowed, "passed": ok}
        if check.get("halving"):
            from dataclasses import replace

            hcfg = replace(sim_cfg, n_paths=int(check.get("halving_paths", sim_cfg.n_paths)))
            study = mc_simulator.dt_halving_study(params, reinsurance, policy, x0, hcfg)
            out["check"]["halving"] = study.to_dict()
            out["check"]["halving"]["bias_shrinks"] = study.bias_shrinks
            ok = ok and study.bias_shrinks
            out["check"]["passed"] = ok
        if not ok:
            status = EXIT_SIM
    _emit_json(out, args.out)
    return status


SWEEP_COLUMNS = ["value", "regime", "decay", "amplitude", "u_star", "xi_star", "V0"]


def sweep_rows(params: ModelParams, reinsurance: Reinsurance, name: str, values) -> list:
    if name not in ("K", "c", "delta"):
        raise ConfigError(f"sweep.param must be one of K, c, delta; got {name!r}")
    values = sorted(float(v) for v in values)
    if name == "delta":
        # include the regime seam when it falls inside the sweep
        t = qvi_solver.debt_threshold(params, reinsurance)
        if values and values[0] <= t <= values[-1] and t not in values:
            values = sorted(values + [t])
    rows = []
    for v in values:
        sol = qvi_solver.solve(params.replace(**{name: v}), reinsurance)
        rows.append([v, sol.regime.tag, sol.decay, sol.amplitude, sol.u_star, sol.xi_star, sol.value(0.0)])
    return rows


def cmd_sweep(cfg, args) -> int:
    params, reinsurance = build_model(cfg)
    block = cfg.get("sweep")
    if not block or "param" not in block:
        raise ConfigError("sweep: block with 'param' required")
    values = block["values"] if "values" in block else _grid(
        {k: block[k] for k in ("start", "stop", "num") if k in block}
    )
    rows = sweep_rows(params, reinsurance, block["param"], values)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([block["param"]] + SWEEP_COLUMNS[1:])
    for row in rows:
        w.writerow([row[0] if isinstance(row[0], str) else repr(row[0]), row[1]] + [repr(float(v)) for v in row[2:]])
    if args.out:
        Path(args.out).write_text(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "verify": cmd_verify,
    "oracle": cmd_oracle,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ruinless", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--out", help="output file (default: stdout)")
    parser.add_argument("--seed", type=int, help="simulation seed (unsigned 64-bit)")
    parser.add_argument(
        "--override", action="append", default=[], metavar="KEY=VALUE",
        help="set a config value by dotted path, e.g. model.delta=2.5 or decay=4.9349",
    )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.override, args.seed)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, ModelError) as exc:
        print(f"config error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except KeyError as exc:
        print(f"config error: missing key {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except QviViolation as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY


if __name__ == "__main__":
    sys.exit(main())
