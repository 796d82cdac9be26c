"""Core numerical library for distopt."""

from core.problem import LocalBlock, SeparableProblem, build_problem, build_consensus_problem
from core.first_order import (
    SolverConfig,
    SolveResult,
    dual_ascent,
    dual_decomposition,
    method_of_multipliers,
    admm_two_block,
    consensus_admm,
)
from core.sqp import SqpConfig, SqpProblem, sqp_solve
from core.aladin import AladinConfig, run_aladin

__all__ = [
    "LocalBlock",
    "SeparableProblem",
    "build_problem",
    "build_consensus_problem",
    "SolverConfig",
    "SolveResult",
    "dual_ascent",
    "dual_decomposition",
    "method_of_multipliers",
    "admm_two_block",
    "consensus_admm",
    "SqpConfig",
    "SqpProblem",
    "sqp_solve",
    "AladinConfig",
    "run_aladin",
]
