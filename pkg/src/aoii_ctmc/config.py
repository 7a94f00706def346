"""JSON run-configuration schema and its validation.

One JSON document describes one run. Validation is hand-rolled so every
failure names the offending path (e.g. ``source.sigma1: must be a positive
number``), which the CLI surfaces verbatim with exit code 2.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import ctmc
from .ctmc import Channel, Generator
from .optimizer import EatPolicy, EsatPolicy, Policy, PsPolicy, SolverConfig, StPolicy

SCHEMA_ID = "aoii-ctmc/1"
FAMILIES = ("esat", "eat", "st", "ps")
SWEEP_AXES = ("tau", "budget", "states")


class ConfigError(ValueError):
    """Schema violation; the message starts with the offending path."""


def _fail(path: str, msg: str):
    raise ConfigError(f"{path}: {msg}")


def _get(doc: dict, key: str, path: str, required: bool = True, default=None):
    if key not in doc:
        if required:
            _fail(f"{path}.{key}" if path else key, "missing required field")
        return default
    return doc[key]


def _number(value, path: str, positive: bool = False, nonnegative: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(path, f"must be a number, got {value!r}")
    v = float(value)
    if not math.isfinite(v):
        _fail(path, "must be finite")
    if positive and v <= 0:
        _fail(path, f"must be positive, got {v}")
    if nonnegative and v < 0:
        _fail(path, f"must be nonnegative, got {v}")
    return v


def _integer(value, path: str, minimum: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        _fail(path, f"must be an integer, got {value!r}")
    if minimum is not None and value < minimum:
        _fail(path, f"must be >= {minimum}, got {value}")
    return value


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    values: tuple
    families: tuple[str, ...]
    simulate: bool


@dataclass(frozen=True)
class RunConfig:
    schema: str
    source_spec: dict
    source: Generator
    channel: Channel
    policy: Policy | None
    family: str | None
    budget: float | None
    solver: SolverConfig
    sim_cycles: int
    sim_seed: int
    sweep: SweepSpec | None = None


def build_source(spec: dict, path: str = "source") -> Generator:
    """Construct and validate a generator from its JSON description."""
    if not isinstance(spec, dict):
        _fail(path, "must be an object")
    kind = _get(spec, "kind", path)
    try:
        if kind == "matrix":
            q = _get(spec, "q", path)
            if not isinstance(q, list):
                _fail(f"{path}.q", "must be a matrix (list of rows)")
            try:
                arr = np.array(q, dtype=float)
            except (TypeError, ValueError):
                _fail(f"{path}.q", "must be a rectangular numeric matrix")
            return ctmc.validate(arr)
        if kind == "symmetric":
            return ctmc.make_symmetric(
                _integer(_get(spec, "n", path), f"{path}.n", minimum=2),
                _number(_get(spec, "sigma", path), f"{path}.sigma", positive=True),
            )
        if kind == "binary":
            return ctmc.make_binary(
                _number(_get(spec, "sigma1", path), f"{path}.sigma1", positive=True),
                _number(_get(spec, "sigma2", path), f"{path}.sigma2", positive=True),
            )
        if kind == "spread":
            return ctmc.make_spread(
                _integer(_get(spec, "n", path), f"{path}.n", minimum=2),
                _number(_get(spec, "sigma_min", path), f"{path}.sigma_min", positive=True),
                _number(_get(spec, "sigma_max", path), f"{path}.sigma_max", positive=True),
                _number(_get(spec, "p_min", path), f"{path}.p_min", nonnegative=True),
                _number(_get(spec, "p_max", path), f"{path}.p_max", positive=True),
            )
    except ctmc.GeneratorError as exc:
        _fail(path, str(exc))
    _fail(f"{path}.kind", f"unknown source kind {kind!r}; expected matrix/symmetric/binary/spread")


def parse_policy(spec: dict, n: int, path: str = "policy") -> Policy:
    """Parse a policy description; ``null`` thresholds mean +inf."""
    if not isinstance(spec, dict):
        _fail(path, "must be an object")
    family = _get(spec, "family", path)
    if family == "esat":
        raw = _get(spec, "thresholds", path)
        if not isinstance(raw, list) or len(raw) != n:
            _fail(f"{path}.thresholds", f"must be an {n}x{n} matrix")
        mat = np.zeros((n, n))
        for j, row in enumerate(raw):
            if not isinstance(row, list) or len(row) != n:
                _fail(f"{path}.thresholds[{j}]", f"must be a row of {n} entries")
            for i, v in enumerate(row):
                if v is None:
                    mat[j, i] = math.inf
                else:
                    mat[j, i] = _number(v, f"{path}.thresholds[{j}][{i}]", nonnegative=True)
        return EsatPolicy(thresholds=mat)
    if family == "eat":
        raw = _get(spec, "thresholds", path)
        if not isinstance(raw, list) or len(raw) != n:
            _fail(f"{path}.thresholds", f"must be a list of {n} thresholds")
        taus = np.array([
            _number(v, f"{path}.thresholds[{j}]", nonnegative=True) for j, v in enumerate(raw)
        ])
        return EatPolicy(taus=taus)
    if family == "st":
        return StPolicy(tau=_number(_get(spec, "tau", path), f"{path}.tau", nonnegative=True))
    if family == "ps":
        return PsPolicy(gamma=_number(_get(spec, "gamma", path), f"{path}.gamma", nonnegative=True))
    _fail(f"{path}.family", f"unknown policy family {family!r}; expected one of {FAMILIES}")


def policy_to_json(policy: Policy) -> dict:
    """Inverse of :func:`parse_policy`; +inf thresholds serialize as null."""
    if isinstance(policy, EsatPolicy):
        rows = [[None if math.isinf(v) else float(v) for v in row]
                for row in policy.thresholds]
        return {"family": "esat", "thresholds": rows}
    if isinstance(policy, EatPolicy):
        return {"family": "eat", "thresholds": [float(v) for v in policy.taus]}
    if isinstance(policy, StPolicy):
        return {"family": "st", "tau": float(policy.tau)}
    if isinstance(policy, PsPolicy):
        return {"family": "ps", "gamma": float(policy.gamma)}
    raise TypeError(f"unknown policy type {type(policy).__name__}")


def _parse_solver(doc: dict | None) -> SolverConfig:
    if doc is None:
        return SolverConfig()
    if not isinstance(doc, dict):
        _fail("solver", "must be an object")
    kwargs = {}
    numeric_fields = {
        "eps_eta": "positive", "eps_lambda": "positive", "eps_tau": "positive",
        "delta_tau": "positive", "tau_max": "positive", "lambda_max": "positive",
        "lambda_max_ceiling": "positive", "gamma_max": "positive",
    }
    for key, mode in numeric_fields.items():
        if key in doc:
            kwargs[key] = _number(doc[key], f"solver.{key}", positive=(mode == "positive"))
    if "grid_cap" in doc:
        kwargs["grid_cap"] = _integer(doc["grid_cap"], "solver.grid_cap", minimum=1)
    if "max_policy_iterations" in doc:
        kwargs["max_policy_iterations"] = _integer(
            doc["max_policy_iterations"], "solver.max_policy_iterations", minimum=1)
    if "max_bisect_iterations" in doc:
        kwargs["max_bisect_iterations"] = _integer(
            doc["max_bisect_iterations"], "solver.max_bisect_iterations", minimum=1)
    unknown = set(doc) - set(numeric_fields) - {"grid_cap", "max_policy_iterations",
                                                "max_bisect_iterations"}
    if unknown:
        _fail(f"solver.{sorted(unknown)[0]}", "unknown field")
    return SolverConfig(**kwargs)


def _parse_sweep(doc: dict, source_kind: str) -> SweepSpec:
    axis = _get(doc, "axis", "sweep")
    if axis not in SWEEP_AXES:
        _fail("sweep.axis", f"must be one of {SWEEP_AXES}, got {axis!r}")
    raw_values = _get(doc, "values", "sweep")
    if not isinstance(raw_values, list) or not raw_values:
        _fail("sweep.values", "must be a non-empty list")
    if axis == "states":
        values = tuple(_integer(v, f"sweep.values[{i}]", minimum=2)
                       for i, v in enumerate(raw_values))
        if source_kind not in ("symmetric", "spread"):
            _fail("sweep.axis", "states sweep needs a symmetric or spread source")
    else:
        values = tuple(_number(v, f"sweep.values[{i}]", nonnegative=True)
                       for i, v in enumerate(raw_values))
        if axis == "budget" and any(v <= 0 for v in values):
            _fail("sweep.values", "budgets must be positive")
    families_raw = doc.get("families", ["st"] if axis == "tau" else ["ps", "st", "eat"])
    if not isinstance(families_raw, list) or not families_raw:
        _fail("sweep.families", "must be a non-empty list")
    for i, fam in enumerate(families_raw):
        if fam not in FAMILIES:
            _fail(f"sweep.families[{i}]", f"must be one of {FAMILIES}, got {fam!r}")
    simulate = doc.get("simulate", False)
    if not isinstance(simulate, bool):
        _fail("sweep.simulate", "must be a boolean")
    return SweepSpec(axis=axis, values=values, families=tuple(families_raw),
                     simulate=simulate)


def parse_config(doc: dict) -> RunConfig:
    """Validate a parsed JSON document into a :class:`RunConfig`."""
    if not isinstance(doc, dict):
        raise ConfigError("config root must be an object")
    schema = _get(doc, "$schema", "")
    if schema != SCHEMA_ID:
        _fail("$schema", f"expected {SCHEMA_ID!r}, got {schema!r}")
    source_spec = _get(doc, "source", "")
    source = build_source(source_spec)
    channel_doc = _get(doc, "channel", "")
    if not isinstance(channel_doc, dict):
        _fail("channel", "must be an object")
    try:
        channel = Channel(mu=_number(_get(channel_doc, "mu", "channel"), "channel.mu",
                                     positive=True))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        _fail("channel.mu", str(exc))
    policy = None
    if "policy" in doc:
        policy = parse_policy(doc["policy"], source.n)
    family = doc.get("family")
    if family is not None and family not in FAMILIES:
        _fail("family", f"must be one of {FAMILIES}, got {family!r}")
    budget = None
    if "budget" in doc:
        budget = _number(doc["budget"], "budget", positive=True)
    solver = _parse_solver(doc.get("solver"))
    sim_doc = doc.get("simulation", {})
    if not isinstance(sim_doc, dict):
        _fail("simulation", "must be an object")
    sim_cycles = _integer(sim_doc.get("cycles", 100_000), "simulation.cycles", minimum=1)
    sim_seed = _integer(sim_doc.get("seed", 0), "simulation.seed", minimum=0)
    sweep = None
    if "sweep" in doc:
        if not isinstance(doc["sweep"], dict):
            _fail("sweep", "must be an object")
        sweep = _parse_sweep(doc["sweep"], source_spec.get("kind"))
    return RunConfig(
        schema=schema, source_spec=source_spec, source=source, channel=channel,
        policy=policy, family=family, budget=budget, solver=solver,
        sim_cycles=sim_cycles, sim_seed=sim_seed, sweep=sweep,
    )


def load_config(path: str | Path) -> RunConfig:
    """Read and validate a JSON config file."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return parse_config(doc)
