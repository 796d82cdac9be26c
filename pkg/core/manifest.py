"""Problem and run manifests, and solver dispatch by name.

A problem manifest is a JSON document:

    {
      "name": "two-blocks",
      "b": [2.0],
      "consensus": false,
      "blocks": [
        {"objective": {"kind": "quadratic", "H": [[1.0]], "q": [0.0]},
         "A": [[1.0]], "start": [0.0]},
        {"objective": {"kind": "quadratic", "H": [[1.0]], "q": [0.0]},
         "A": [[1.0]], "lb": [-5.0], "ub": [null],
         "equality": null, "inequality": null}
      ]
    }

Objective kinds are "quadratic" (1/2 x^T H x + q^T x + const) and "linear"
(q^T x + const). Optional linear local constraints are given as
{"matrix": [[...]], "rhs": [...]} and read G x - rhs = 0 / <= 0.
"""

import json
import logging
from enum import Enum
from pathlib import Path
from typing import Any, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from core.aladin import AladinConfig, run_aladin
from core.benchmarks import (
    gen_consensus_quadratic,
    gen_linear_coupled,
    gen_logistic_consensus,
    gen_random_quadratic,
    gen_sensor_problem,
    gen_sensor_scene,
    gen_synthetic_dataset,
    linear_objective,
    quadratic_objective,
)
from core.calculus import ScalarField, VectorField
from core.errors import DimensionError, ManifestError, UnsupportedProblemError
from core.first_order import (
    SolverConfig,
    SolveResult,
    admm_two_block,
    consensus_admm,
    dual_ascent,
    dual_decomposition,
    method_of_multipliers,
)
from core.problem import ConvergenceTrace, IterateState, LocalBlock, SeparableProblem, build_problem
from core.sqp import SqpConfig, SqpProblem, detect_active_set, sqp_solve
from utils.file_utils import load_dataset


logger = logging.getLogger(__name__)


class SolverName(str, Enum):
    """Solvers selectable by name."""

    DUAL_ASCENT = "dual-ascent"
    DUAL_DECOMP = "dual-decomp"
    MOM = "mom"
    ADMM = "admm"
    CONSENSUS_ADMM = "consensus-admm"
    ALADIN = "aladin"
    CENTRALIZED = "centralized"


class BenchmarkName(str, Enum):
    """Built-in problem generators."""

    CONSENSUS_QUADRATIC = "consensus-quadratic"
    LOGISTIC = "logistic"
    SENSOR = "sensor"
    LINEAR_COUPLED = "linear-coupled"
    RANDOM_QUADRATIC = "random-quadratic"


class ObjectiveSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["quadratic", "linear"]
    H: Optional[list[list[float]]] = None
    q: list[float]
    const: float = 0.0

    @model_validator(mode="after")
    def _check_kind(self) -> "ObjectiveSpec":
        if self.kind == "quadratic" and self.H is None:
            raise ValueError("quadratic objectives need H")
        return self

    def build(self) -> ScalarField:
        if self.kind == "linear":
            base = linear_objective(self.q)
            if not self.const:
                return base
            return ScalarField(lambda x: base(x) + self.const, base.dim, grad=base.grad, hess=base.hess)
        return quadratic_objective(self.H, self.q, self.const)  # type: ignore[arg-type]


class LinearRowsSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    matrix: list[list[float]]
    rhs: list[float]

    def build(self, n: int) -> VectorField:
        G = np.asarray(self.matrix, dtype=float).reshape(-1, n)
        rhs = np.asarray(self.rhs, dtype=float)
        if rhs.shape != (G.shape[0],):
            raise DimensionError(f"constraint rhs has length {rhs.shape[0]}, matrix has {G.shape[0]} rows")
        return VectorField(
            lambda x: G @ x - rhs,
            n,
            G.shape[0],
            jac=lambda x: G,
            weighted_hess=lambda x, w: np.zeros((n, n)),
        )


class BlockSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    objective: ObjectiveSpec
    A: list[list[float]]
    lb: Optional[list[Optional[float]]] = None
    ub: Optional[list[Optional[float]]] = None
    start: Optional[list[float]] = None
    equality: Optional[LinearRowsSpec] = None
    inequality: Optional[LinearRowsSpec] = None
    name: str = ""

    def build(self, m_c: int) -> LocalBlock:
        f = self.objective.build()
        n = f.dim
        A = np.asarray(self.A, dtype=float) if m_c else np.zeros((0, n))
        lb = None if self.lb is None else [-np.inf if v is None else v for v in self.lb]
        ub = None if self.ub is None else [np.inf if v is None else v for v in self.ub]
        return LocalBlock(
            f=f,
            A=A,
            g=None if self.equality is None else self.equality.build(n),
            h=None if self.inequality is None else self.inequality.build(n),
            lb=None if lb is None else np.asarray(lb, dtype=float),
            ub=None if ub is None else np.asarray(ub, dtype=float),
            name=self.name,
        )


class ProblemManifest(BaseModel):
    """JSON description of a block-separable problem."""

    model_config = ConfigDict(extra="forbid")

    name: str = "problem"
    b: list[float]
    blocks: list[BlockSpec] = Field(min_length=1)
    consensus: bool = False

    def build(self) -> SeparableProblem:
        blocks = [spec.build(len(self.b)) for spec in self.blocks]
        starts = [spec.start for spec in self.blocks]
        z0 = None
        if any(s is not None for s in starts):
            z0 = [np.zeros(block.n) if s is None else np.asarray(s, dtype=float) for block, s in zip(blocks, starts)]
        return build_problem(blocks, self.b, z0=z0, consensus=self.consensus, name=self.name)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ProblemManifest":
        try:
            with open(path, "r", encoding="utf-8") as f:
                return cls.model_validate(json.load(f))
        except (OSError, json.JSONDecodeError, ValidationError) as e:
            raise ManifestError(f"cannot read problem manifest {path}: {e}") from e


class BenchmarkParams(BaseModel):
    """Parameters of the built-in benchmarks (each uses the subset it needs)."""

    model_config = ConfigDict(extra="forbid")

    seed: int = 0
    M: int = Field(default=100, ge=1)
    n_x: int = Field(default=2, ge=1)
    n_sub: int = Field(default=10, ge=1)
    gamma: float = Field(default=0.1, ge=0)
    strict: bool = True
    dataset: Optional[Path] = None
    N: int = Field(default=5, ge=3)
    sigma: float = Field(default=0.5, ge=0)
    slack: Optional[float] = Field(default=None, gt=0)
    centers: list[float] = Field(default_factory=lambda: [1.0, 3.0])
    weights: Optional[list[float]] = None
    n_blocks: int = Field(default=2, ge=1)
    b: float = 2.0
    m_c: int = Field(default=2, ge=1)
    max_dim: int = Field(default=4, ge=1)


class RunManifest(BaseModel):
    """One solver run: problem source, solver, overrides and outputs.

    Attributes:
        benchmark: Built-in problem name (exclusive with problem_file).
        problem_file: Path of a ProblemManifest JSON file.
        params: Benchmark parameters.
        solver: Solver name.
        overrides: Solver configuration fields to override.
        trace_path: Trace CSV output.
        plot_script: Optional convergence plot script output.
        scene_path: Optional sensor scene export.
    """

    model_config = ConfigDict(extra="forbid")

    benchmark: Optional[BenchmarkName] = None
    problem_file: Optional[Path] = None
    params: BenchmarkParams = Field(default_factory=BenchmarkParams)
    solver: SolverName
    overrides: dict[str, Any] = Field(default_factory=dict)
    trace_path: Optional[Path] = None
    plot_script: Optional[Path] = None
    scene_path: Optional[Path] = None

    @model_validator(mode="after")
    def _check_source(self) -> "RunManifest":
        if (self.benchmark is None) == (self.problem_file is None):
            raise ValueError("give exactly one of benchmark or problem_file")
        if self.problem_file is not None and not self.problem_file.is_file():
            raise ValueError(f"problem file {self.problem_file} does not exist")
        if self.params.dataset is not None and not self.params.dataset.is_file():
            raise ValueError(f"dataset {self.params.dataset} does not exist")
        return self

    @classmethod
    def load(cls, path: Union[str, Path]) -> "RunManifest":
        try:
            with open(path, "r", encoding="utf-8") as f:
                return cls.model_validate(json.load(f))
        except (OSError, json.JSONDecodeError, ValidationError) as e:
            raise ManifestError(f"cannot read run manifest {path}: {e}") from e

    def build_problem(self) -> SeparableProblem:
        if self.problem_file is not None:
            return ProblemManifest.load(self.problem_file).build()
        return build_benchmark(self.benchmark, self.params)  # type: ignore[arg-type]

    def solver_config(self) -> Union[SolverConfig, AladinConfig, SqpConfig]:
        return make_config(self.solver, self.overrides)


def build_benchmark(name: BenchmarkName, params: BenchmarkParams) -> SeparableProblem:
    """Instantiate a built-in benchmark."""
    if name == BenchmarkName.CONSENSUS_QUADRATIC:
        return gen_consensus_quadratic(params.centers, params.weights)
    if name == BenchmarkName.LOGISTIC:
        if params.dataset is not None:
            data = load_dataset(params.dataset)
        else:
            data = gen_synthetic_dataset(params.M, params.n_x, params.seed)
        return gen_logistic_consensus(data, params.n_sub, params.gamma, strict=params.strict)
    if name == BenchmarkName.SENSOR:
        return gen_sensor_problem(gen_sensor_scene(params.N, params.sigma, params.seed), slack=params.slack)
    if name == BenchmarkName.LINEAR_COUPLED:
        return gen_linear_coupled(params.n_blocks, params.b)
    return gen_random_quadratic(params.seed, params.n_blocks, params.max_dim, params.m_c)


_CONFIG_TYPES: dict[SolverName, type[BaseModel]] = {
    SolverName.ALADIN: AladinConfig,
    SolverName.CENTRALIZED: SqpConfig,
}


def solver_config_type(solver: SolverName) -> type[BaseModel]:
    """Configuration model used by a solver."""
    return _CONFIG_TYPES.get(solver, SolverConfig)


def make_config(solver: SolverName, overrides: dict[str, Any]) -> Union[SolverConfig, AladinConfig, SqpConfig]:
    """Build the solver's configuration; unknown keys are rejected.

    Raises:
        ManifestError: On unknown keys or invalid values.
    """
    config_type = solver_config_type(solver)
    unknown = sorted(set(overrides) - set(config_type.model_fields))
    if unknown:
        raise ManifestError(f"unknown {solver.value} options: {', '.join(unknown)}")
    try:
        return config_type(**overrides)  # type: ignore[return-value]
    except ValidationError as e:
        raise ManifestError(f"invalid {solver.value} options: {e}") from e


def _centralized(problem: SeparableProblem, cfg: SqpConfig) -> SolveResult:
    starts = problem.start()
    active = [detect_active_set(block.inequality_field(), z) for block, z in zip(problem.blocks, starts)]
    prob = SqpProblem.from_separable(problem, active)
    res = sqp_solve(prob, np.concatenate(starts), cfg=cfg)
    state = IterateState(
        x=problem.split(res.x),
        z=problem.split(res.x),
        lam=-res.lam[: problem.m_c],
    )
    trace = ConvergenceTrace()
    for record in res.trace.records[1:]:
        trace.record(
            objective=record.objective,
            primal_res=record.primal_res,
            dual_res=record.dual_res,
            step_norm=record.step_norm,
            seconds=record.seconds,
        )
    return SolveResult(state=state, trace=trace, status=res.status, iterations=res.iterations, solver="centralized")


def run_solver(
    solver: SolverName,
    problem: SeparableProblem,
    cfg: Union[SolverConfig, AladinConfig, SqpConfig, None] = None,
) -> SolveResult:
    """Run a named solver on a problem.

    "admm" needs exactly two blocks without local constraints; "centralized"
    solves the stacked problem by SQP with the inequality rows active at the
    start point held as equalities.
    """
    cfg = cfg if cfg is not None else make_config(solver, {})
    logger.info(f"Running {solver.value} on '{problem.name}'")
    if solver == SolverName.ALADIN:
        return run_aladin(problem, cfg)  # type: ignore[arg-type]
    if solver == SolverName.CENTRALIZED:
        return _centralized(problem, cfg)  # type: ignore[arg-type]
    if solver == SolverName.DUAL_ASCENT:
        return dual_ascent(problem, cfg)  # type: ignore[arg-type]
    if solver == SolverName.DUAL_DECOMP:
        return dual_decomposition(problem, cfg)  # type: ignore[arg-type]
    if solver == SolverName.MOM:
        return method_of_multipliers(problem, cfg)  # type: ignore[arg-type]
    if solver == SolverName.CONSENSUS_ADMM:
        return consensus_admm(problem, cfg)  # type: ignore[arg-type]

    if problem.n_blocks != 2 or any(block.has_local_constraints for block in problem.blocks):
        raise UnsupportedProblemError("admm needs exactly two blocks without local constraints")
    first, second = problem.blocks
    start = problem.start()
    return admm_two_block(
        first.f, second.f, first.A, second.A, problem.b, cfg, x0=start[0], z0=start[1]  # type: ignore[arg-type]
    )
