"""Augmented Lagrangian based alternating direction inexact Newton (ALADIN).

One outer iteration:

1. Every block solves its local NLP
       min f_i(x_i) + lambda^T A_i x_i + (nu/2)||x_i - z_i||^2_{Sigma_i}
   subject to its local constraints (concurrently through map_blocks).
2. Each block reports a positive definite Lagrangian Hessian B_i.
3. A coupled equality-constrained QP (the coordination step) combines all
   blocks' curvature with the coupling penalty and the active constraints.
4. x <- x + dx, z <- x.
5. lambda <- lambda + alpha (sum_i A_i x_i - b).
"""

import logging
import time
from dataclasses import dataclass
from functools import partial
from typing import Iterator, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.linalg import block_diag

from config.settings import HessianMode, SolveStatus
from core.calculus import Matrix, Vector, VectorField
from core.errors import (
    BlockFailureError,
    CoordinationInfeasibleError,
    DimensionError,
    DistOptError,
    NotPositiveSemidefiniteError,
    SingularKktError,
    TaskFailureError,
)
from core.executor import ExecutionMode, map_blocks
from core.first_order import BlockSubproblem, SolveResult
from core.kkt import is_symmetric, min_eigenvalue, regularize_spd, solve_saddle_point
from core.problem import (
    ConvergenceTrace,
    IterateState,
    LocalBlock,
    SeparableProblem,
    coupling_residual,
    total_objective,
)
from core.sqp import ActiveSet, SqpConfig, SqpProblem, detect_active_set, sqp_solve


logger = logging.getLogger(__name__)


HESSIAN_FLOOR = 1e-6
MAX_ACTIVE_ROUNDS = 20
MULTIPLIER_TOL = 1e-8
CONSISTENCY_TOL = 1e-9


class AladinConfig(BaseModel):
    """Options for run_aladin.

    Attributes:
        rho: Coordination penalty.
        nu: Local proximal weight.
        sigma: Per-block scaling matrices (None = identity for every block).
        alpha: Dual step; None uses rho, which makes the new multiplier equal
            the coordination QP multiplier.
        max_iter: Outer iteration budget.
        tol_primal: Bound on the coupling residual.
        tol_dual: Bound on the relative primal step.
        eps_act: Activity threshold for inequality rows.
        hessian_mode: exact-fd, analytic or regularized.
        inner_tol: KKT tolerance of the local SQP solves.
        local_max_iter: Step budget of each local SQP solve.
        execution: Sequential or concurrent local steps.
    """

    model_config = ConfigDict(frozen=True)

    rho: float = Field(default=1e3, gt=0)
    nu: float = Field(default=1e4, gt=0)
    sigma: Optional[list[list[list[float]]]] = None
    alpha: Optional[float] = Field(default=None, gt=0)
    max_iter: int = Field(default=50, ge=1)
    tol_primal: float = Field(default=1e-8, ge=0)
    tol_dual: float = Field(default=1e-8, ge=0)
    eps_act: float = Field(default=1e-6, ge=0)
    hessian_mode: HessianMode = HessianMode.ANALYTIC
    inner_tol: float = Field(default=1e-10, gt=0)
    local_max_iter: int = Field(default=50, ge=1)
    execution: ExecutionMode = Field(default_factory=ExecutionMode.from_settings)

    @model_validator(mode="after")
    def _check_sigma(self) -> "AladinConfig":
        for i, matrix in enumerate(self.sigma or []):
            S = np.asarray(matrix, dtype=float)
            if S.ndim != 2 or S.shape[0] != S.shape[1] or not is_symmetric(S):
                raise ValueError(f"Sigma_{i} must be a symmetric square matrix")
            if min_eigenvalue(S) <= 0:
                raise ValueError(f"Sigma_{i} must be positive definite")
        return self

    @property
    def dual_step(self) -> float:
        return self.rho if self.alpha is None else self.alpha

    def scaling(self, block_index: int, n: int) -> Matrix:
        """Sigma for one block; a single configured matrix applies to every block."""
        if not self.sigma:
            return np.eye(n)
        matrix = self.sigma[0] if len(self.sigma) == 1 else self.sigma[block_index]
        S = np.asarray(matrix, dtype=float)
        if S.shape != (n, n):
            raise DimensionError(f"Sigma has shape {S.shape}, block needs ({n}, {n})", block_index=block_index)
        return S


@dataclass(frozen=True)
class LocalStep:
    """Local NLP solution of one block.

    Attributes:
        x: Local minimizer.
        gamma: Equality multipliers (f + gamma^T g convention).
        mu: Inequality multipliers over all folded rows, zero off the working set.
        active: Rows with h_j(x) >= -eps_act at x.
        iterations: SQP steps summed over active-set rounds.
    """

    x: Vector
    gamma: Vector
    mu: Vector
    active: ActiveSet
    iterations: int = 0

    def __iter__(self) -> Iterator[object]:
        return iter((self.x, self.gamma, self.mu, self.active))


@dataclass(frozen=True)
class CoordinationQp:
    """Data of the coupled coordination QP.

        min  sum_i 1/2 dx_i^T B_i dx_i + grad_i^T dx_i + lambda^T s + (rho/2)||s||^2
        s.t. sum_i A_i (x_i + dx_i) - b = s
             C_i dx_i = -c_i                (equalities and active rows)

    Attributes:
        B: Positive definite Hessian approximations.
        gradients: Objective gradients at the local points.
        jacobians: Linearized constraint rows C_i.
        constraint_values: Constraint values c_i at the local points.
        A: Coupling matrices.
        x: Local points.
        b: Coupling right-hand side.
        lam: Current coupling multiplier.
        rho: Coupling penalty.
    """

    B: tuple[Matrix, ...]
    gradients: tuple[Vector, ...]
    jacobians: tuple[Matrix, ...]
    constraint_values: tuple[Vector, ...]
    A: tuple[Matrix, ...]
    x: tuple[Vector, ...]
    b: Vector
    lam: Vector
    rho: float

    def __post_init__(self) -> None:
        count = len(self.B)
        fields = (self.gradients, self.jacobians, self.constraint_values, self.A, self.x)
        if any(len(item) != count for item in fields):
            raise DimensionError("coordination QP needs one entry per block in every field")
        if self.rho <= 0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        for i in range(count):
            n = self.x[i].shape[0]
            if self.B[i].shape != (n, n) or self.gradients[i].shape != (n,):
                raise DimensionError(f"block {i}: B or gradient does not match dimension {n}", block_index=i)
            if min_eigenvalue(self.B[i]) <= 0:
                raise NotPositiveSemidefiniteError(f"block {i}: B_i is not positive definite")
            if self.jacobians[i].shape != (self.constraint_values[i].shape[0], n):
                raise DimensionError(
                    f"block {i}: Jacobian shape {self.jacobians[i].shape} does not match "
                    f"{self.constraint_values[i].shape[0]} constraint rows",
                    block_index=i,
                )
            if self.A[i].shape != (self.b.shape[0], n):
                raise DimensionError(f"block {i}: coupling matrix has shape {self.A[i].shape}", block_index=i)
        if self.lam.shape != self.b.shape:
            raise DimensionError(f"lambda has shape {self.lam.shape}, expected {self.b.shape}")

    @classmethod
    def from_local_steps(
        cls,
        problem: SeparableProblem,
        steps: Sequence[LocalStep],
        hessians: Sequence[Matrix],
        lam: Vector,
        rho: float,
    ) -> "CoordinationQp":
        jacobians = []
        values = []
        for block, step in zip(problem.blocks, steps):
            rows = step.active.as_array()
            jacobians.append(
                np.vstack([block.equality_jacobian(step.x), block.inequality_jacobian(step.x)[rows]])
            )
            values.append(np.concatenate([block.equalities(step.x), block.inequalities(step.x)[rows]]))
        return cls(
            B=tuple(hessians),
            gradients=tuple(block.f.gradient(step.x) for block, step in zip(problem.blocks, steps)),
            jacobians=tuple(jacobians),
            constraint_values=tuple(values),
            A=tuple(block.A for block in problem.blocks),
            x=tuple(step.x for step in steps),
            b=problem.b,
            lam=np.asarray(lam, dtype=float),
            rho=rho,
        )

    @property
    def dims(self) -> list[int]:
        return [x.shape[0] for x in self.x]

    @property
    def residual(self) -> Vector:
        """sum_i A_i x_i - b at the local points, in block order."""
        r = -self.b.copy()
        for A, x in zip(self.A, self.x):
            r = r + A @ x
        return r


def _local_constraints(
    block: LocalBlock,
    h_field: Optional[VectorField],
    working: ActiveSet,
) -> Optional[VectorField]:
    m_g = block.equality_count
    rows = working.as_array()
    total = m_g + rows.size
    if total == 0:
        return None

    def fn(x: Vector) -> Vector:
        parts = [block.equalities(x)]
        if rows.size:
            parts.append(h_field(x)[rows])  # type: ignore[misc]
        return np.concatenate(parts)

    def jac(x: Vector) -> Matrix:
        parts = [block.equality_jacobian(x)]
        if rows.size:
            parts.append(h_field.jacobian(x)[rows])  # type: ignore[union-attr]
        return np.vstack(parts)

    def weighted_hess(x: Vector, w: Vector) -> Matrix:
        H = np.zeros((block.n, block.n))
        if block.g is not None:
            H = H + block.g.hessian_of(x, w[:m_g])
        if rows.size:
            full = np.zeros(block.inequality_count)
            full[rows] = w[m_g:]
            H = H + h_field.hessian_of(x, full)  # type: ignore[union-attr]
        return H

    return VectorField(fn, block.n, total, jac=jac, weighted_hess=weighted_hess)


def local_step(
    block: LocalBlock,
    lam: Vector,
    z_i: Vector,
    cfg: AladinConfig,
    block_index: int = 0,
) -> LocalStep:
    """Solve one block's local NLP.

    Inequalities are handled by a working set: violated rows are added and
    rows with negative multipliers dropped, each round solved as an
    equality-constrained problem by sqp_solve.

    Args:
        block: Block data.
        lam: Coupling multiplier snapshot.
        z_i: Proximal center.
        cfg: Options.
        block_index: Index reported on failure.

    Returns:
        LocalStep with the active set detected at the returned point.

    Raises:
        BlockFailureError: If the local SQP does not converge or the working set does not settle.
    """
    z = np.asarray(z_i, dtype=float).reshape(-1)
    if z.shape != (block.n,):
        raise DimensionError(f"z has length {z.shape[0]}, block needs {block.n}", block_index=block_index)

    sub = BlockSubproblem(
        f=block.f,
        linear=block.A.T @ np.asarray(lam, dtype=float),
        center=z,
        weight=cfg.nu,
        scaling=cfg.scaling(block_index, block.n),
    )
    h_field = block.inequality_field()
    count = block.inequality_count
    m_g = block.equality_count
    working = detect_active_set(h_field, z, cfg.eps_act)
    sqp_cfg = SqpConfig(tol=cfg.inner_tol, max_iter=cfg.local_max_iter)

    x = z.copy()
    gamma = np.zeros(m_g)
    mu_work = np.zeros(0)
    steps = 0
    for _ in range(MAX_ACTIVE_ROUNDS):
        try:
            prob = SqpProblem(sub.as_field(), _local_constraints(block, h_field, working))
            res = sqp_solve(prob, x, cfg=sqp_cfg)
        except DistOptError as e:
            raise BlockFailureError(f"block {block_index}: local solve failed: {e}", block_index) from e
        if not res.usable:
            raise BlockFailureError(
                f"block {block_index}: local SQP ended with status {res.status.value} "
                f"(residual {res.residual:.3e})",
                block_index,
            )
        steps += res.iterations
        x = res.x
        gamma = -res.lam[:m_g]
        mu_work = -res.lam[m_g:]

        values = h_field(x) if h_field is not None else np.zeros(0)
        violated = tuple(j for j in range(count) if j not in working and values[j] > cfg.eps_act)
        if violated:
            working = ActiveSet(working.indices + violated)
            continue
        if mu_work.size and mu_work.min() < -MULTIPLIER_TOL:
            drop = working.indices[int(np.argmin(mu_work))]
            working = ActiveSet(tuple(j for j in working.indices if j != drop))
            continue
        break
    else:
        raise BlockFailureError(f"block {block_index}: working set did not settle", block_index)

    mu = np.zeros(count)
    if len(working):
        mu[working.as_array()] = np.maximum(mu_work, 0.0)
    active = detect_active_set(h_field, x, cfg.eps_act)
    return LocalStep(x=x, gamma=gamma, mu=mu, active=active, iterations=steps)


def hessian_approx(
    block: LocalBlock,
    x_i: Vector,
    gamma_i: Vector,
    mu_i: Vector,
    cfg: AladinConfig,
) -> Matrix:
    """Positive definite approximation of the Hessian of f_i + gamma^T g_i + mu^T h_i.

    Eigenvalues are clipped at 1e-6 when the Hessian is indefinite (or
    nearly so) and always in regularized mode.
    """
    gamma_i = np.asarray(gamma_i, dtype=float).reshape(-1)
    mu_i = np.asarray(mu_i, dtype=float).reshape(-1)
    if gamma_i.shape != (block.equality_count,) or mu_i.shape != (block.inequality_count,):
        raise DimensionError(
            f"multipliers have lengths {gamma_i.shape[0]}/{mu_i.shape[0]}, "
            f"block has {block.equality_count}/{block.inequality_count} rows"
        )
    H = block.lagrangian_hessian(x_i, gamma_i, mu_i, fd_only=cfg.hessian_mode == HessianMode.EXACT_FD)
    if cfg.hessian_mode == HessianMode.REGULARIZED or min_eigenvalue(H) < HESSIAN_FLOOR:
        H = regularize_spd(H, HESSIAN_FLOOR)
    return H


def assemble_coordination_system(qp: CoordinationQp) -> tuple[Matrix, Vector]:
    """Symmetric KKT matrix and right-hand side of the coordination QP.

    Unknowns are (dx, lambda_qp, kappa):

        [[B,  A^T,     C^T],      [ -grad              ]
         [A,  -I/rho,  0  ],  =   [ -r - lambda / rho  ]
         [C,  0,       0  ]]      [ -c                 ]
    """
    B = block_diag(*qp.B)
    n = B.shape[0]
    A = np.hstack(qp.A)
    m_c = A.shape[0]
    C = block_diag(*qp.jacobians).reshape(-1, n) if qp.jacobians else np.zeros((0, n))
    m_a = C.shape[0]

    K = np.block([
        [B, A.T, C.T],
        [A, -np.eye(m_c) / qp.rho, np.zeros((m_c, m_a))],
        [C, np.zeros((m_a, m_c)), np.zeros((m_a, m_a))],
    ])
    rhs = np.concatenate([
        -np.concatenate(qp.gradients),
        -qp.residual - qp.lam / qp.rho,
        -np.concatenate(qp.constraint_values) if m_a else np.zeros(0),
    ])
    return K, rhs


def _check_linearized_constraints(qp: CoordinationQp) -> None:
    for i, (C, c) in enumerate(zip(qp.jacobians, qp.constraint_values)):
        if C.shape[0] == 0 or np.linalg.matrix_rank(C) == C.shape[0]:
            continue
        dx, *_ = np.linalg.lstsq(C, -c, rcond=None)
        mismatch = float(np.linalg.norm(C @ dx + c))
        if mismatch > CONSISTENCY_TOL * (1.0 + float(np.linalg.norm(c))):
            raise CoordinationInfeasibleError(
                f"block {i}: linearized active constraints are inconsistent (mismatch {mismatch:.3e})",
                block_index=i,
            )


def solve_coordination(qp: CoordinationQp) -> Vector:
    """Full solution (dx, lambda_qp, kappa) of the coordination system."""
    _check_linearized_constraints(qp)
    K, rhs = assemble_coordination_system(qp)
    return solve_saddle_point(K, rhs)


def coordination_step(qp: CoordinationQp) -> tuple[list[Vector], Vector]:
    """Solve the coordination QP with one stacked KKT solve.

    Returns:
        Tuple of (per-block steps dx_i, coupling multiplier lambda_qp).

    Raises:
        SingularKktError: If the stacked system is singular.
        CoordinationInfeasibleError: If a block's linearized active rows are inconsistent.
    """
    solution = solve_coordination(qp)
    offsets = np.cumsum([0] + qp.dims)
    deltas = [solution[offsets[i] : offsets[i + 1]].copy() for i in range(len(qp.dims))]
    n = int(offsets[-1])
    return deltas, solution[n : n + qp.b.shape[0]].copy()


def dual_update(lam: Vector, alpha: float, residual_next: Vector) -> Vector:
    """lambda + alpha * residual."""
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    return np.asarray(lam, dtype=float) + alpha * np.asarray(residual_next, dtype=float)


def _local_task(
    block: LocalBlock, lam: Vector, z_i: Vector, cfg: AladinConfig, index: int
) -> tuple[LocalStep, Matrix]:
    step = local_step(block, lam, z_i, cfg, block_index=index)
    return step, hessian_approx(block, step.x, step.gamma, step.mu, cfg)


def _aborted(error: DistOptError, trace: ConvergenceTrace) -> DistOptError:
    error.partial_trace = trace
    return error


def run_aladin(problem: SeparableProblem, cfg: Optional[AladinConfig] = None) -> SolveResult:
    """Run the ALADIN outer loop.

    Args:
        problem: Block-separable problem (local constraints allowed).
        cfg: Options.

    Returns:
        SolveResult with per-iteration active sets in active_history.

    Raises:
        BlockFailureError: If a local step fails (carries block and iteration).
        SingularKktError: If a coordination system is singular (carries iteration).
        CoordinationInfeasibleError: If linearized active rows are inconsistent.

    Each of these carries the iterations completed so far in partial_trace.
    """
    cfg = cfg or AladinConfig()
    state = IterateState.initial(problem)
    trace = ConvergenceTrace()
    active_history: list[list[ActiveSet]] = []
    status = SolveStatus.MAX_ITER
    start = time.perf_counter()

    logger.info(
        f"aladin: {problem.n_blocks} block(s), m_c={problem.m_c}, rho={cfg.rho}, nu={cfg.nu}, "
        f"mode={cfg.execution.kind.value}"
    )
    for k in range(cfg.max_iter):
        lam = state.lam.copy()
        tasks = [
            partial(_local_task, block, lam, z_i.copy(), cfg, i)
            for i, (block, z_i) in enumerate(zip(problem.blocks, state.z))
        ]
        try:
            outputs = map_blocks(tasks, cfg.execution).results
        except TaskFailureError as e:
            index = e.indices[0]
            logger.warning(f"aladin: local step failed at iteration {k} (blocks {e.indices})")
            raise _aborted(
                BlockFailureError(
                    f"iteration {k}: local step of block {index} failed: {e.failures[index]}",
                    block_index=index,
                    iteration=k,
                ),
                trace,
            ) from e
        steps = [step for step, _ in outputs]
        hessians = [H for _, H in outputs]

        qp = CoordinationQp.from_local_steps(problem, steps, hessians, lam, cfg.rho)
        try:
            deltas, _ = coordination_step(qp)
        except SingularKktError as e:
            raise _aborted(
                SingularKktError(
                    f"iteration {k}: {e}", condition=e.condition, rank=e.rank, size=e.size, iteration=k
                ),
                trace,
            ) from e
        except CoordinationInfeasibleError as e:
            raise _aborted(
                CoordinationInfeasibleError(f"iteration {k}: {e}", block_index=e.block_index, iteration=k),
                trace,
            ) from e

        xs = [step.x + dx for step, dx in zip(steps, deltas)]
        r = coupling_residual(problem, xs)
        x_old = np.concatenate(state.x)
        step_norm = float(np.linalg.norm(np.concatenate(xs) - x_old))
        dual_res = step_norm / (1.0 + float(np.linalg.norm(x_old)))
        primal_res = float(np.linalg.norm(r))

        state.x = xs
        state.z = [x.copy() for x in xs]
        state.gamma = [step.gamma for step in steps]
        state.mu = [step.mu for step in steps]
        state.lam = dual_update(lam, cfg.dual_step, r)
        active_history.append([step.active for step in steps])
        trace.record(
            objective=total_objective(problem, xs),
            primal_res=primal_res,
            dual_res=dual_res,
            step_norm=step_norm,
            seconds=time.perf_counter() - start,
        )
        logger.debug(f"aladin iter {k}: primal_res={primal_res:.3e} dual_res={dual_res:.3e}")

        if primal_res <= cfg.tol_primal and dual_res <= cfg.tol_dual:
            status = SolveStatus.CONVERGED
            break

    result = SolveResult(
        state=state,
        trace=trace,
        status=status,
        iterations=len(trace),
        solver="aladin",
        active_history=active_history,
    )
    logger.info(
        f"aladin: status={status.value} iterations={result.iterations} "
        f"primal_res={result.primal_res:.3e}"
    )
    return result
