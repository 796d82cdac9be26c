"""Equality-constrained SQP as Newton's method on the KKT conditions.

For min f(x) s.t. c(x) = 0 with Lagrangian L = f - lambda^T c, each step
solves

    [[grad2_xx L, -A^T], [A, 0]] [p; p_lambda] = -[grad f - A^T lambda; c]

with A the constraint Jacobian. Inequalities enter only through an active
set detected outside the loop and held as equalities.
"""

import logging
import math
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.linalg import block_diag

from config.settings import SolveStatus
from core.calculus import Matrix, ScalarField, Vector, VectorField
from core.errors import DimensionError
from core.kkt import KktSystem, min_eigenvalue, nullspace_basis, regularize_spd, solve_kkt
from core.problem import ConvergenceTrace, SeparableProblem


logger = logging.getLogger(__name__)


class SqpConfig(BaseModel):
    """Options for sqp_solve.

    Attributes:
        tol: Stop once ||F(x, lambda)|| <= tol.
        max_iter: Maximum Newton steps.
        regularization: Eigenvalue floor used when the tangent curvature test fails.
    """

    model_config = ConfigDict(frozen=True)

    tol: float = Field(default=1e-10, gt=0)
    max_iter: int = Field(default=50, ge=1)
    regularization: float = Field(default=1e-6, gt=0)


class StepForm(str, Enum):
    """Algebraic route for the Newton step."""

    NEWTON = "newton"
    QP = "qp"


@dataclass(frozen=True)
class ActiveSet:
    """Sorted inequality row indices treated as equalities."""

    indices: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        idx = tuple(int(i) for i in self.indices)
        if len(set(idx)) != len(idx):
            raise ValueError(f"active set has duplicate indices: {idx}")
        if any(i < 0 for i in idx):
            raise ValueError(f"active set has negative indices: {idx}")
        object.__setattr__(self, "indices", tuple(sorted(idx)))

    def __len__(self) -> int:
        return len(self.indices)

    def __contains__(self, index: object) -> bool:
        return index in self.indices

    def validate(self, row_count: int) -> None:
        if self.indices and self.indices[-1] >= row_count:
            raise DimensionError(f"active index {self.indices[-1]} out of range for {row_count} rows")

    def as_array(self) -> np.ndarray:
        return np.asarray(self.indices, dtype=int)


@dataclass(frozen=True)
class SqpProblem:
    """min f(x) subject to c(x) = 0.

    Attributes:
        f: Objective.
        c: Equality constraints (None for an unconstrained problem).
    """

    f: ScalarField
    c: Optional[VectorField] = None

    def __post_init__(self) -> None:
        if self.c is not None:
            if self.c.in_dim != self.f.dim:
                raise DimensionError(f"c accepts dimension {self.c.in_dim}, f has {self.f.dim}")
            if self.c.out_dim > self.f.dim:
                raise DimensionError(f"{self.c.out_dim} constraints exceed dimension {self.f.dim}")

    @property
    def n(self) -> int:
        return self.f.dim

    @property
    def m(self) -> int:
        return 0 if self.c is None else self.c.out_dim

    def constraints(self, x: Vector) -> Vector:
        return np.zeros(0) if self.c is None or self.m == 0 else self.c(x)

    def jacobian(self, x: Vector) -> Matrix:
        return np.zeros((0, self.n)) if self.c is None or self.m == 0 else self.c.jacobian(x)

    def lagrangian_hessian(self, x: Vector, lam: Vector) -> Matrix:
        H = self.f.hessian(x)
        if self.m:
            H = H - self.c.hessian_of(x, lam)  # type: ignore[union-attr]
        return 0.5 * (H + H.T)

    @classmethod
    def from_separable(
        cls,
        problem: SeparableProblem,
        active: Optional[Sequence[ActiveSet]] = None,
    ) -> "SqpProblem":
        """Centralized problem: coupling rows, every equality, chosen active inequalities.

        Args:
            problem: Block-separable problem.
            active: Per-block active sets over the folded inequality rows.
        """
        blocks = problem.blocks
        active = list(active) if active is not None else [ActiveSet() for _ in blocks]
        fields = [block.inequality_field() for block in blocks]
        for block, act in zip(blocks, active):
            act.validate(block.inequality_count)

        A = problem.stacked_coupling()
        b = problem.b
        eq_counts = [block.equality_count for block in blocks]
        act_counts = [len(act) for act in active]
        m = problem.m_c + sum(eq_counts) + sum(act_counts)

        def fn(x: Vector) -> float:
            parts = problem.split(x)
            return math.fsum(block.f(xi) for block, xi in zip(blocks, parts))

        def grad(x: Vector) -> Vector:
            parts = problem.split(x)
            return np.concatenate([block.f.gradient(xi) for block, xi in zip(blocks, parts)])

        def hess(x: Vector) -> Matrix:
            parts = problem.split(x)
            return block_diag(*[block.f.hessian(xi) for block, xi in zip(blocks, parts)])

        def c(x: Vector) -> Vector:
            parts = problem.split(x)
            rows = [A @ x - b]
            rows += [block.equalities(xi) for block, xi in zip(blocks, parts)]
            for fld, act, xi in zip(fields, active, parts):
                if len(act):
                    rows.append(fld(xi)[act.as_array()])  # type: ignore[misc]
            return np.concatenate(rows)

        def jac(x: Vector) -> Matrix:
            parts = problem.split(x)
            eq = block_diag(*[block.equality_jacobian(xi) for block, xi in zip(blocks, parts)])
            ineq = block_diag(*[
                fld.jacobian(xi)[act.as_array()] if len(act) else np.zeros((0, block.n))  # type: ignore[union-attr]
                for block, fld, act, xi in zip(blocks, fields, active, parts)
            ])
            return np.vstack([A, eq.reshape(-1, problem.total_dim), ineq.reshape(-1, problem.total_dim)])

        def weighted_hess(x: Vector, w: Vector) -> Matrix:
            parts = problem.split(x)
            pos = problem.m_c
            eq_weights = []
            for count in eq_counts:
                eq_weights.append(w[pos : pos + count])
                pos += count
            hessians = []
            for block, fld, act, xi, we in zip(blocks, fields, active, parts, eq_weights):
                H = np.zeros((block.n, block.n))
                if block.g is not None:
                    H = H + block.g.hessian_of(xi, we)
                if len(act):
                    full = np.zeros(block.inequality_count)
                    full[act.as_array()] = w[pos : pos + len(act)]
                    pos += len(act)
                    H = H + fld.hessian_of(xi, full)  # type: ignore[union-attr]
                hessians.append(H)
            return block_diag(*hessians)

        n = problem.total_dim
        return cls(
            f=ScalarField(fn, n, grad=grad, hess=hess),
            c=VectorField(c, n, m, jac=jac, weighted_hess=weighted_hess) if m else None,
        )


@dataclass
class SqpResult:
    """Outcome of sqp_solve.

    Attributes:
        x: Final primal point.
        lam: Final multipliers (convention L = f - lambda^T c).
        status: converged or max-iter (diverged on non-finite iterates).
            Converged always means residual <= tol.
        iterations: Newton steps taken.
        residual: Final ||F(x, lambda)||.
        trace: Per-iterate records (record 0 is the start point).
        iterates: (x, lambda) pairs visited, start point first.
        stalled: Newton stopped at the roundoff floor with residual <= sqrt(tol)
            but above tol; status is then max-iter.
    """

    x: Vector
    lam: Vector
    status: SolveStatus
    iterations: int
    residual: float
    trace: ConvergenceTrace
    iterates: list[tuple[Vector, Vector]] = field(default_factory=list)
    stalled: bool = False

    @property
    def converged(self) -> bool:
        return self.status == SolveStatus.CONVERGED

    @property
    def usable(self) -> bool:
        """Converged, or stalled at the roundoff floor."""
        return self.converged or self.stalled


def kkt_residual(prob: SqpProblem, x: Vector, lam: Vector) -> Vector:
    """F(x, lambda) = (grad f(x) - A(x)^T lambda, c(x))."""
    x = np.asarray(x, dtype=float).reshape(-1)
    lam = np.asarray(lam, dtype=float).reshape(-1)
    if x.shape[0] != prob.n or lam.shape[0] != prob.m:
        raise DimensionError(f"expected x of length {prob.n} and lambda of length {prob.m}")
    grad = prob.f.gradient(x)
    if prob.m == 0:
        return grad
    return np.concatenate([grad - prob.jacobian(x).T @ lam, prob.constraints(x)])


def tangent_curvature(H: Matrix, A: Matrix) -> float:
    """Smallest eigenvalue of H restricted to null(A)."""
    Z = nullspace_basis(A, H.shape[0])
    if Z.shape[1] == 0:
        return float("inf")
    return min_eigenvalue(Z.T @ H @ Z)


def sqp_step(
    prob: SqpProblem,
    x: Vector,
    lam: Vector,
    form: StepForm = StepForm.NEWTON,
    hessian: Optional[Matrix] = None,
) -> tuple[Vector, Vector]:
    """One Newton step on the KKT conditions.

    Args:
        prob: Problem.
        x: Current point.
        lam: Current multipliers.
        form: NEWTON solves for (p, p_lambda) and adds p_lambda to lambda;
            QP solves the quadratic-program form for (p, lambda_next) directly.
        hessian: Override for the Lagrangian Hessian (e.g. a regularized one).

    Returns:
        Tuple of (p, lambda_next).

    Raises:
        SingularKktError: If the KKT matrix is singular.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    lam = np.asarray(lam, dtype=float).reshape(-1)
    H = prob.lagrangian_hessian(x, lam) if hessian is None else hessian
    A = prob.jacobian(x)
    grad = prob.f.gradient(x)
    c = prob.constraints(x)

    if form == StepForm.NEWTON:
        p, p_lambda = solve_kkt(KktSystem(H, A, -(grad - A.T @ lam), -c))
        return p, lam + p_lambda
    p, lam_next = solve_kkt(KktSystem(H, A, -grad, -c))
    return p, lam_next


def _least_squares_multipliers(prob: SqpProblem, x: Vector) -> Vector:
    A = prob.jacobian(x)
    lam, *_ = np.linalg.lstsq(A.T, prob.f.gradient(x), rcond=None)
    return lam


def sqp_solve(
    prob: SqpProblem,
    x0: Vector,
    lam0: Optional[Vector] = None,
    cfg: Optional[SqpConfig] = None,
) -> SqpResult:
    """Newton iteration (x, lambda) <- (x, lambda) + (p, p_lambda) until ||F|| <= tol.

    When the Lagrangian Hessian fails the tangent-space curvature test the
    multipliers are first re-estimated by least squares; if the test still
    fails the Hessian is passed through regularize_spd.

    Args:
        prob: Problem.
        x0: Start point.
        lam0: Start multipliers (zeros when None).
        cfg: Options.

    Returns:
        SqpResult; status max-iter when the budget runs out or Newton stalls
        above tol (stalled is then set).
    """
    cfg = cfg or SqpConfig()
    x = np.array(x0, dtype=float).reshape(-1)
    lam = np.zeros(prob.m) if lam0 is None else np.array(lam0, dtype=float).reshape(-1)
    trace = ConvergenceTrace()
    iterates: list[tuple[Vector, Vector]] = []
    start = time.perf_counter()
    step_norm = 0.0
    status = SolveStatus.MAX_ITER
    stalled = False
    steps = 0

    while True:
        F = kkt_residual(prob, x, lam)
        residual = float(np.linalg.norm(F))
        n = prob.n
        trace.record(
            objective=prob.f(x),
            primal_res=float(np.linalg.norm(F[n:])),
            dual_res=float(np.linalg.norm(F[:n])),
            step_norm=step_norm,
            seconds=time.perf_counter() - start,
        )
        iterates.append((x.copy(), lam.copy()))

        if not np.all(np.isfinite(F)):
            status = SolveStatus.DIVERGED
            break
        if residual <= cfg.tol:
            status = SolveStatus.CONVERGED
            break
        stagnated = steps > 0 and step_norm <= 10.0 * np.finfo(float).eps * (1.0 + np.linalg.norm(x))
        if stagnated and residual <= math.sqrt(cfg.tol):
            # Newton cannot reduce the residual below the roundoff floor.
            stalled = True
            break
        if steps >= cfg.max_iter:
            break

        H = prob.lagrangian_hessian(x, lam)
        A = prob.jacobian(x)
        if tangent_curvature(H, A) <= 0.0:
            if prob.m:
                lam_ls = _least_squares_multipliers(prob, x)
                H_ls = prob.lagrangian_hessian(x, lam_ls)
                if tangent_curvature(H_ls, A) > 0.0:
                    logger.debug(f"SQP step {steps}: re-estimated multipliers for curvature")
                    lam, H = lam_ls, H_ls
                else:
                    H = regularize_spd(H, cfg.regularization)
            else:
                H = regularize_spd(H, cfg.regularization)
            if tangent_curvature(H, A) <= 0.0:
                H = regularize_spd(H, cfg.regularization)

        p, lam = sqp_step(prob, x, lam, hessian=H)
        x = x + p
        step_norm = float(np.linalg.norm(p))
        steps += 1

    if status != SolveStatus.CONVERGED:
        logger.debug(
            f"SQP stopped with status {status.value} after {steps} steps "
            f"(residual {residual:.3e}, stalled={stalled})"
        )
    return SqpResult(
        x=x,
        lam=lam,
        status=status,
        iterations=steps,
        residual=residual,
        trace=trace,
        iterates=iterates,
        stalled=stalled,
    )


def detect_active_set(h: Optional[VectorField], x: Vector, eps_act: float = 1e-6) -> ActiveSet:
    """Indices j with h_j(x) >= -eps_act."""
    if eps_act < 0:
        raise ValueError(f"eps_act must be non-negative, got {eps_act}")
    if h is None or h.out_dim == 0:
        return ActiveSet()
    values = h(x)
    return ActiveSet(tuple(int(j) for j in np.flatnonzero(values >= -eps_act)))
