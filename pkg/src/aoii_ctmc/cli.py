"""Command-line front end: analyze, optimize, simulate, and sweep workflows.

Every command reads one JSON config (see :mod:`aoii_ctmc.config`), prints a
JSON result to stdout, and optionally writes JSON/CSV files under --out.
Wall-clock timings go to a separate ``*_timing.csv`` sidecar so the primary
outputs are byte-identical across runs of the same config and seed.

Exit codes: 0 success, 2 configuration error (including grid-cap refusals),
3 infeasible budget, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import (
    ConfigError,
    RunConfig,
    build_source,
    load_config,
    parse_policy,
    policy_to_json,
)
from .ctmc import GeneratorError
from .numerics import DimensionError, DomainError, SingularMatrixError
from .optimizer import (
    GridCapError,
    InfeasibleBudgetError,
    OptimizeError,
    StPolicy,
    evaluate_policy,
    optimize,
)
from .simulator import SimConfig, simulate, simulate_detailed

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_NUMERIC = 4


def _jsonify(obj):
    """Recursively convert to JSON-safe types; non-finite floats become null."""
    if isinstance(obj, dict):
        return {k: _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonify(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n")


def _write_plot_script(csv_path: Path, n_columns: int) -> Path:
    script = csv_path.with_suffix(".gnuplot")
    script.write_text(
        "\n".join(
            [
                f"# plot companion for {csv_path.name}",
                "set datafile separator comma",
                "set key autotitle columnhead outside",
                "set grid",
                f"plot for [col=2:{n_columns}] '{csv_path.name}' using 1:col with linespoints",
                "pause -1",
            ]
        )
        + "\n"
    )
    return script


def _emit(
    args,
    base: str,
    json_obj: dict,
    csv_header: list[str] | None = None,
    csv_rows: list[list] | None = None,
    timing: tuple[list[str], list[list]] | None = None,
) -> None:
    payload = json.dumps(_jsonify(json_obj), indent=2, sort_keys=True)
    print(payload)
    if not args.out:
        return
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.format in ("json", "both"):
        (out_dir / f"{base}.json").write_text(payload + "\n")
    if args.format in ("csv", "both") and csv_header is not None:
        csv_path = out_dir / f"{base}.csv"
        _write_csv(csv_path, csv_header, csv_rows or [])
        if getattr(args, "emit_plot_script", False):
            _write_plot_script(csv_path, len(csv_header))
    if timing is not None:
        _write_csv(out_dir / f"{base}_timing.csv", timing[0], timing[1])


def _policy_from_artifact(path: str, n: int):
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read policy artifact {path}: {exc}") from exc
    if "policy" not in doc:
        raise ConfigError(f"artifact {path} carries no 'policy' field")
    return parse_policy(doc["policy"], n, path=f"{path}:policy")


def cmd_analyze(cfg: RunConfig, args) -> int:
    policy = cfg.policy
    if args.policy_from:
        policy = _policy_from_artifact(args.policy_from, cfg.source.n)
    if policy is None:
        raise ConfigError("policy: analyze needs an explicit policy (or --policy-from)")
    ev = evaluate_policy(cfg.source, cfg.channel, policy)
    result = {
        "$schema": "aoii-ctmc-analyze/1",
        "method": ev.method,
        "maoii": ev.maoii,
        "rate": ev.rate,
        "pi": ev.pi,
        "policy": policy_to_json(policy),
        "cycles": [
            {"sync_value": j, "d": c.d, "a": c.a, "c": c.c, "p": c.p}
            for j, c in enumerate(ev.cycles)
        ],
    }
    n = cfg.source.n
    header = (
        ["sync_value", "pi", "d", "a", "c"]
        + [f"p_{i}" for i in range(n)]
        + ["maoii", "rate"]
    )
    rows = [
        [j, ev.pi[j], c.d, c.a, c.c, *c.p, ev.maoii, ev.rate]
        for j, c in enumerate(ev.cycles)
    ]
    _emit(args, "analyze", result, header, rows)
    return EXIT_OK


def cmd_optimize(cfg: RunConfig, args) -> int:
    if cfg.family is None:
        raise ConfigError("family: optimize needs a policy family")
    if cfg.budget is None:
        raise ConfigError("budget: optimize needs a sampling budget")
    outcome = optimize(cfg.source, cfg.channel, cfg.family, cfg.budget, cfg.solver)
    res = outcome.constrained
    report = res.report
    result = {
        "$schema": "aoii-ctmc-optimize/1",
        "family": outcome.family,
        "budget": cfg.budget,
        "policy": policy_to_json(res.policy),
        "maoii": res.result.maoii,
        "rate": res.result.rate,
        "pi": res.result.pi,
        "lambda_star": res.lambda_star,
        "rate_tolerance": res.rate_tolerance,
        "saturated": res.saturated,
        "iterations": report.iterations if report else None,
        "converged": report.converged if report else True,
        "eta_trace": list(report.eta_trace) if report else [],
        "value_vector": report.value_vector if report else [],
        "notes": list(report.notes) if report else [],
    }
    header = ["family", "budget", "maoii", "rate", "lambda_star", "rate_tolerance", "params"]
    rows = [[
        outcome.family, cfg.budget, res.result.maoii, res.result.rate,
        "" if res.lambda_star is None else res.lambda_star,
        res.rate_tolerance, _policy_params_string(res.policy),
    ]]
    timing = (["family", "budget", "wall_time_s"],
              [[outcome.family, cfg.budget, outcome.wall_time_s]])
    _emit(args, "optimize", result, header, rows, timing=timing)
    return EXIT_OK


def _policy_params_string(policy) -> str:
    doc = policy_to_json(policy)
    if doc["family"] == "st":
        return _fmt(doc["tau"])
    if doc["family"] == "ps":
        return _fmt(doc["gamma"])
    if doc["family"] == "eat":
        return ";".join(_fmt(v) for v in doc["thresholds"])
    flat = []
    for j, row in enumerate(doc["thresholds"]):
        for i, v in enumerate(row):
            if i != j:
                flat.append("inf" if v is None else _fmt(v))
    return ";".join(flat)


def cmd_simulate(cfg: RunConfig, args) -> int:
    policy = cfg.policy
    if args.policy_from:
        policy = _policy_from_artifact(args.policy_from, cfg.source.n)
    if policy is None:
        raise ConfigError("policy: simulate needs an explicit policy (or --policy-from)")
    seed = cfg.sim_seed if args.seed is None else args.seed
    sim_cfg = SimConfig(
        source=cfg.source, channel=cfg.channel, policy=policy,
        cycles=cfg.sim_cycles, seed=seed,
    )
    if args.trace:
        result, records, _ = simulate_detailed(sim_cfg)
    else:
        result, records = simulate(sim_cfg), []
    doc = {
        "$schema": "aoii-ctmc-simulate/1",
        "method": "simulated",
        "maoii_hat": result.maoii_hat,
        "rate_hat": result.rate_hat,
        "stderr_maoii": result.stderr_maoii,
        "stderr_rate": result.stderr_rate,
        "cycle_count": result.cycle_count,
        "seed": seed,
        "policy": policy_to_json(policy),
    }
    header = ["maoii_hat", "rate_hat", "stderr_maoii", "stderr_rate", "cycle_count", "seed"]
    rows = [[result.maoii_hat, result.rate_hat, result.stderr_maoii,
             result.stderr_rate, result.cycle_count, seed]]
    _emit(args, "simulate", doc, header, rows)
    if args.trace and args.out:
        trace_header = ["index", "sync_value", "hold_time", "excursion", "area",
                        "attempts", "next_sync"]
        trace_rows = [
            [r.index, r.sync_value, r.hold_time, r.excursion, r.area, r.attempts, r.next_sync]
            for r in records
        ]
        _write_csv(Path(args.out) / "simulate_trace.csv", trace_header, trace_rows)
    return EXIT_OK


def _sweep_task(task: dict) -> dict:
    """One sweep grid point; module-level so process pools can pickle it."""
    kind = task["kind"]
    source = task["source"]
    channel = task["channel"]
    row: dict = {}
    if kind == "tau":
        ev = evaluate_policy(source, channel, StPolicy(tau=task["tau"]))
        row.update(tau=task["tau"], maoii=ev.maoii, rate=ev.rate)
        policy = StPolicy(tau=task["tau"])
    else:
        outcome = optimize(source, channel, task["family"], task["budget"], task["solver"])
        res = outcome.constrained
        row.update(
            family=task["family"], maoii=res.result.maoii, rate=res.result.rate,
            lambda_star="" if res.lambda_star is None else res.lambda_star,
            params=_policy_params_string(res.policy),
            wall_time_s=outcome.wall_time_s,
        )
        policy = res.policy
    if task["simulate"]:
        sim = simulate(SimConfig(source=source, channel=channel, policy=policy,
                                 cycles=task["cycles"], seed=task["seed"]))
        row.update(
            maoii_sim=sim.maoii_hat, rate_sim=sim.rate_hat,
            stderr_maoii=sim.stderr_maoii, stderr_rate=sim.stderr_rate,
        )
    return row


def cmd_sweep(cfg: RunConfig, args) -> int:
    sweep = cfg.sweep
    if sweep is None:
        raise ConfigError("sweep: sweep command needs a sweep section")
    tasks = []
    if sweep.axis == "tau":
        for i, tau in enumerate(sweep.values):
            tasks.append({
                "kind": "tau", "source": cfg.source, "channel": cfg.channel,
                "tau": tau, "simulate": sweep.simulate, "cycles": cfg.sim_cycles,
                "seed": cfg.sim_seed + i, "axis_value": tau,
            })
    elif sweep.axis == "budget":
        i = 0
        for budget in sweep.values:
            for family in sweep.families:
                tasks.append({
                    "kind": "budget", "source": cfg.source, "channel": cfg.channel,
                    "family": family, "budget": budget, "solver": cfg.solver,
                    "simulate": sweep.simulate, "cycles": cfg.sim_cycles,
                    "seed": cfg.sim_seed + i, "axis_value": budget,
                })
                i += 1
    else:  # states
        if cfg.budget is None:
            raise ConfigError("budget: states sweep needs a budget")
        i = 0
        for n in sweep.values:
            spec = dict(cfg.source_spec)
            spec["n"] = int(n)
            source_n = build_source(spec)
            for family in sweep.families:
                tasks.append({
                    "kind": "states", "source": source_n, "channel": cfg.channel,
                    "family": family, "budget": cfg.budget, "solver": cfg.solver,
                    "simulate": sweep.simulate, "cycles": cfg.sim_cycles,
                    "seed": cfg.sim_seed + i, "axis_value": int(n),
                })
                i += 1
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_sweep_task, tasks))
    else:
        results = [_sweep_task(t) for t in tasks]

    axis_col = {"tau": "tau", "budget": "budget", "states": "n"}[sweep.axis]
    sim_cols = ["maoii_sim", "rate_sim", "stderr_maoii", "stderr_rate"] if sweep.simulate else []
    if sweep.axis == "tau":
        header = ["tau", "maoii", "rate"] + sim_cols
        rows = [[r["tau"], r["maoii"], r["rate"]] + [r[c] for c in sim_cols] for r in results]
        timing = None
    else:
        header = [axis_col, "family", "maoii", "rate", "lambda_star", "params"] + sim_cols
        rows = [
            [t["axis_value"], r["family"], r["maoii"], r["rate"], r["lambda_star"], r["params"]]
            + [r[c] for c in sim_cols]
            for t, r in zip(tasks, results)
        ]
        timing = (
            [axis_col, "family", "wall_time_s"],
            [[t["axis_value"], r["family"], r["wall_time_s"]]
             for t, r in zip(tasks, results)],
        )
    doc = {
        "$schema": "aoii-ctmc-sweep/1",
        "axis": sweep.axis,
        "rows": [dict(zip(header, row)) for row in rows],
    }
    _emit(args, "sweep", doc, header, rows, timing=timing)
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aoii-ctmc",
        description="Age-optimal transmission thresholds for CTMC sources "
                    "under a sampling budget",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in [
        ("analyze", "evaluate an explicit policy analytically"),
        ("optimize", "find budget-optimal parameters for one policy family"),
        ("simulate", "Monte Carlo estimate for an explicit policy"),
        ("sweep", "tabulate a parameter sweep as CSV/JSON"),
    ]:
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, help="path to the JSON run config")
        p.add_argument("--out", help="directory for output files")
        p.add_argument("--format", choices=["json", "csv", "both"], default="both")
        p.add_argument("--emit-plot-script", action="store_true",
                       help="write a gnuplot script next to each CSV")
        if name in ("analyze", "simulate"):
            p.add_argument("--policy-from",
                           help="take the policy from a prior optimize JSON artifact")
        if name == "simulate":
            p.add_argument("--seed", type=int, help="override the config seed")
            p.add_argument("--trace", action="store_true",
                           help="write a per-cycle trace CSV (requires --out)")
        if name == "sweep":
            p.add_argument("--jobs", type=int, default=1,
                           help="concurrent grid points (default 1)")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        handler = {
            "analyze": cmd_analyze,
            "optimize": cmd_optimize,
            "simulate": cmd_simulate,
            "sweep": cmd_sweep,
        }[args.command]
        return handler(cfg, args)
    except (ConfigError, GeneratorError, GridCapError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleBudgetError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (SingularMatrixError, DomainError, DimensionError, OptimizeError,
            np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
