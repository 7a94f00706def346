"""Age-of-incorrect-information analysis and threshold-policy optimization
for finite-state CTMC sources observed through a memoryless channel."""

from .ctmc import Channel, Generator, make_binary, make_spread, make_symmetric, validate
from .cycles import (
    CycleParams,
    binary_closed_form,
    eat_cycle,
    esat_cycle,
    ps_cycle,
    symmetric_closed_form,
)
from .optimizer import (
    EatPolicy,
    EsatPolicy,
    EvalResult,
    PsPolicy,
    SolveReport,
    SolverConfig,
    StPolicy,
    evaluate_policy,
    lagrangian_bisection,
    optimize,
    policy_iteration,
    ps_rate_match,
    st_bisection,
    steady_state,
)
from .simulator import SimConfig, SimResult, simulate

__all__ = [
    "Channel",
    "Generator",
    "make_binary",
    "make_spread",
    "make_symmetric",
    "validate",
    "CycleParams",
    "binary_closed_form",
    "eat_cycle",
    "esat_cycle",
    "ps_cycle",
    "symmetric_closed_form",
    "EatPolicy",
    "EsatPolicy",
    "EvalResult",
    "PsPolicy",
    "SolveReport",
    "SolverConfig",
    "StPolicy",
    "evaluate_policy",
    "lagrangian_bisection",
    "optimize",
    "policy_iteration",
    "ps_rate_match",
    "st_bisection",
    "steady_state",
    "SimConfig",
    "SimResult",
    "simulate",
]

__version__ = "0.1.0"
