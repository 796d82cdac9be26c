"""First-order coordination methods for block-separable problems.

All solvers share the coupling Lagrangian

    L(x, lambda) = sum_i f_i(x_i) + lambda^T (sum_i A_i x_i - b)

and differ in how the primal argmins and the multiplier step are formed:

- dual ascent / dual decomposition: plain Lagrangian, step alpha.
- method of multipliers: augmented Lagrangian, step rho.
- ADMM: augmented Lagrangian minimized in alternating blocks, step rho.

Each block argmin is an unconstrained damped Newton solve, or an SQP solve
when the block carries equality constraints. Inequalities and bounds are
outside the scope of these methods.
"""

import logging
import time
from dataclasses import dataclass, field
from functools import partial
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from config.settings import SolveStatus, get_settings
from core.calculus import Matrix, ScalarField, Vector, VectorField
from core.errors import DimensionError, DistOptError, UnsupportedProblemError
from core.executor import ExecutionMode, map_blocks
from core.kkt import min_eigenvalue, regularize_spd
from core.problem import (
    ConvergenceTrace,
    IterateState,
    LocalBlock,
    SeparableProblem,
    build_problem,
    coupling_residual,
    total_objective,
)
from core.sqp import ActiveSet, SqpConfig, SqpProblem, sqp_solve


logger = logging.getLogger(__name__)


PROX_TIE_BREAK = 1e-10
INNER_MAX_ITER = 100
ARMIJO_SLOPE = 1e-4
MIN_STEP = 1e-12
CURVATURE_FLOOR = 1e-8


class SolverConfig(BaseModel):
    """Options shared by the first-order solvers.

    Attributes:
        rho: Penalty weight of the augmented Lagrangian.
        alpha: Dual step size for dual ascent / decomposition.
        max_iter: Outer iteration budget.
        tol_primal: Bound on ||sum A_i x_i - b||.
        tol_dual: Bound on ||x^{k+1} - x^k|| / (1 + ||x^k||).
        inner_tol: Gradient tolerance of the block argmins.
        seed: Seed for the optional start perturbation.
        init_jitter: Standard deviation of a seeded perturbation of the start point.
        execution: Sequential or concurrent block execution.
    """

    model_config = ConfigDict(frozen=True)

    rho: float = Field(default=1.0, ge=0)
    alpha: float = Field(default=0.1, gt=0)
    max_iter: int = Field(default=1000, ge=1)
    tol_primal: float = Field(default=1e-8, ge=0)
    tol_dual: float = Field(default=1e-8, ge=0)
    inner_tol: float = Field(default=1e-10, gt=0)
    seed: int = 0
    init_jitter: float = Field(default=0.0, ge=0)
    execution: ExecutionMode = Field(default_factory=ExecutionMode.from_settings)


@dataclass
class SolveResult:
    """Outcome of a distributed solve.

    Attributes:
        state: Final iterate.
        trace: Per-iteration records.
        status: converged, max-iter, diverged or oscillating.
        iterations: Outer iterations performed.
        solver: Solver label.
        active_history: Per-iteration active sets (ALADIN only).
    """

    state: IterateState
    trace: ConvergenceTrace
    status: SolveStatus
    iterations: int
    solver: str = ""
    active_history: list[list[ActiveSet]] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.status == SolveStatus.CONVERGED

    @property
    def primal_res(self) -> float:
        last = self.trace.last
        return float("nan") if last is None else last.primal_res

    def stacked_x(self) -> Vector:
        return np.concatenate(self.state.x)


@dataclass(frozen=True)
class BlockSubproblem:
    """phi(x) = f(x) + v^T x + (rho/2)||M x - d||^2 + (w/2)||x - c||^2.

    The last term is a proximal term around c, optionally scaled as
    (w/2)(x - c)^T S (x - c). With the default tiny weight it is a tie-break
    that selects a unique minimizer when f is convex but not strictly convex.
    """

    f: ScalarField
    linear: Vector
    rho: float = 0.0
    M: Optional[Matrix] = None
    target: Optional[Vector] = None
    center: Optional[Vector] = None
    weight: float = PROX_TIE_BREAK
    scaling: Optional[Matrix] = None

    def _penalized(self) -> bool:
        return self.M is not None and self.rho > 0

    def _scaled(self, dx: Vector) -> Vector:
        return dx if self.scaling is None else self.scaling @ dx

    def value(self, x: Vector) -> float:
        val = self.f(x) + float(self.linear @ x)
        if self._penalized():
            r = self.M @ x - self.target  # type: ignore[operator]
            val += 0.5 * self.rho * float(r @ r)
        if self.center is not None:
            dx = x - self.center
            val += 0.5 * self.weight * float(dx @ self._scaled(dx))
        return val

    def gradient(self, x: Vector) -> Vector:
        grad = self.f.gradient(x) + self.linear
        if self._penalized():
            grad = grad + self.rho * self.M.T @ (self.M @ x - self.target)  # type: ignore[union-attr,operator]
        if self.center is not None:
            grad = grad + self.weight * self._scaled(x - self.center)
        return grad

    def hessian(self, x: Vector) -> Matrix:
        H = self.f.hessian(x)
        if self._penalized():
            H = H + self.rho * self.M.T @ self.M  # type: ignore[union-attr]
        if self.center is not None:
            S = np.eye(self.f.dim) if self.scaling is None else self.scaling
            H = H + self.weight * S
        return 0.5 * (H + H.T)

    def as_field(self) -> ScalarField:
        return ScalarField(self.value, self.f.dim, grad=self.gradient, hess=self.hessian)


@dataclass(frozen=True)
class InnerResult:
    """Block argmin outcome.

    Attributes:
        x: Minimizer estimate.
        ok: False when the solve diverged or failed.
        iterations: Newton or SQP steps taken.
        gamma: Equality multipliers (convention f + gamma^T g).
        stalled: True when the stopping test was never met: the line search
            found no decrease, the step budget ran out, or SQP hit its
            roundoff floor. The iterate is still finite and inside the radius.
    """

    x: Vector
    ok: bool
    iterations: int
    gamma: Vector
    stalled: bool = False


@dataclass(frozen=True)
class GapEstimate:
    """Duality gap f(x) - g(lambda) and its ingredients."""

    gap: float
    dual_value: float
    diverged: bool


def minimize_block(
    sub: BlockSubproblem,
    x0: Vector,
    tol: float,
    radius: float,
    g: Optional[VectorField] = None,
    max_iter: int = INNER_MAX_ITER,
) -> InnerResult:
    """Minimize a block subproblem, subject to g(x) = 0 when given.

    Unconstrained subproblems use damped Newton with Armijo backtracking and
    eigenvalue clipping on indefinite Hessians. Equality-constrained ones are
    handed to sqp_solve.

    Args:
        sub: Subproblem.
        x0: Start point.
        tol: Stop once ||grad phi|| <= tol * (1 + ||v||).
        radius: Iterates beyond this norm count as divergence.
        g: Optional local equality constraints.
        max_iter: Newton step budget.

    Returns:
        InnerResult; ok is False on divergence, stalled marks a solve that
        stopped short of the tolerance without diverging.
    """
    x = np.array(x0, dtype=float)

    if g is not None and g.out_dim:
        try:
            res = sqp_solve(SqpProblem(sub.as_field(), g), x, cfg=SqpConfig(tol=tol, max_iter=max_iter))
        except DistOptError as e:
            logger.debug(f"Constrained block argmin failed: {e}")
            return InnerResult(x, False, 0, np.zeros(g.out_dim))
        ok = res.usable and float(np.linalg.norm(res.x)) <= radius
        return InnerResult(res.x, ok, res.iterations, -res.lam, stalled=res.stalled)

    empty = np.zeros(0)
    threshold = tol * (1.0 + float(np.linalg.norm(sub.linear)))
    for it in range(max_iter):
        grad = sub.gradient(x)
        if not np.all(np.isfinite(grad)):
            return InnerResult(x, False, it, empty)
        if float(np.linalg.norm(grad)) <= threshold:
            return InnerResult(x, True, it, empty)

        H = sub.hessian(x)
        if min_eigenvalue(H) <= 0.0:
            H = regularize_spd(H, CURVATURE_FLOOR)
        try:
            p = np.linalg.solve(H, -grad)
        except np.linalg.LinAlgError:
            return InnerResult(x, False, it, empty)

        phi0 = sub.value(x)
        slope = float(grad @ p)
        t = 1.0
        while t >= MIN_STEP:
            candidate = sub.value(x + t * p)
            if np.isfinite(candidate) and candidate <= phi0 + ARMIJO_SLOPE * t * slope:
                break
            t *= 0.5
        else:
            logger.debug(f"Block argmin line search stalled at step {it} (gradient norm {np.linalg.norm(grad):.3e})")
            return InnerResult(x, True, it, empty, stalled=True)

        x = x + t * p
        if not np.all(np.isfinite(x)) or float(np.linalg.norm(x)) > radius:
            return InnerResult(x, False, it + 1, empty)

    logger.debug(f"Block argmin used its {max_iter} step budget")
    return InnerResult(x, True, max_iter, empty, stalled=True)


def _require_equality_only(problem: SeparableProblem, solver: str) -> None:
    for i, block in enumerate(problem.blocks):
        if block.inequality_count:
            raise UnsupportedProblemError(
                f"{solver} handles equality-constrained blocks only; block {i} has inequalities or bounds"
            )


def _initial_state(problem: SeparableProblem, cfg: SolverConfig) -> IterateState:
    state = IterateState.initial(problem)
    if cfg.init_jitter > 0:
        rng = np.random.default_rng(cfg.seed)
        state.x = [x + cfg.init_jitter * rng.standard_normal(x.shape[0]) for x in state.x]
        state.z = [x.copy() for x in state.x]
    return state


def _merged(problem: SeparableProblem) -> SeparableProblem:
    if problem.n_blocks == 1:
        return problem
    return build_problem(
        [problem.as_single_block()],
        problem.b,
        z0=[np.concatenate(problem.start())],
        name=f"{problem.name}-stacked",
    )


def _unmerge(problem: SeparableProblem, merged: SeparableProblem, state: IterateState) -> IterateState:
    if merged is problem:
        return state
    return IterateState(
        x=problem.split(state.x[0]),
        z=problem.split(state.z[0]),
        lam=state.lam,
        gamma=[np.zeros(block.equality_count) for block in problem.blocks],
        mu=[np.zeros(block.inequality_count) for block in problem.blocks],
    )


def _relative_step(x_new: Vector, x_old: Vector) -> tuple[float, float]:
    step = float(np.linalg.norm(x_new - x_old))
    return step, step / (1.0 + float(np.linalg.norm(x_old)))


def _converged(cfg: SolverConfig, primal_res: float, dual_res: float) -> bool:
    return primal_res <= cfg.tol_primal and dual_res <= cfg.tol_dual


def is_oscillating(history: Sequence[float], window: int, threshold: float) -> bool:
    """True when the last `window` residuals never dropped below the one before them."""
    if len(history) <= window:
        return False
    return min(history[-window:]) >= history[-window - 1] and history[-1] > threshold


def _lagrangian_argmin(
    block: LocalBlock,
    lam: Vector,
    x_prev: Vector,
    rho: float,
    b: Vector,
    tol: float,
    radius: float,
) -> InnerResult:
    sub = BlockSubproblem(
        f=block.f,
        linear=block.A.T @ lam,
        rho=rho,
        M=block.A if rho > 0 else None,
        target=b if rho > 0 else None,
        center=x_prev,
    )
    return minimize_block(sub, x_prev, tol, radius, g=block.g)


def _multiplier_loop(
    problem: SeparableProblem,
    cfg: SolverConfig,
    solver: str,
    penalty: float,
    step: float,
    detect_oscillation: bool,
    state: IterateState,
) -> SolveResult:
    settings = get_settings()
    radius = settings.divergence_radius
    trace = ConvergenceTrace()
    status = SolveStatus.MAX_ITER
    start = time.perf_counter()

    logger.info(f"{solver}: {problem.n_blocks} block(s), m_c={problem.m_c}, rho={penalty}, step={step}")
    for k in range(cfg.max_iter):
        lam = state.lam.copy()
        tasks = [
            partial(_lagrangian_argmin, block, lam, x_prev, penalty, problem.b, cfg.inner_tol, radius)
            for block, x_prev in zip(problem.blocks, state.x)
        ]
        results = map_blocks(tasks, cfg.execution).results
        failed = [i for i, res in enumerate(results) if not res.ok]
        if failed:
            logger.warning(f"{solver}: block argmin diverged at iteration {k} (blocks {failed})")
            status = SolveStatus.DIVERGED
            break
        stalled = [i for i, res in enumerate(results) if res.stalled]
        if stalled:
            logger.debug(f"{solver}: block argmin stopped short of tolerance at iteration {k} (blocks {stalled})")

        xs = [res.x for res in results]
        r = coupling_residual(problem, xs)
        step_norm, dual_res = _relative_step(np.concatenate(xs), np.concatenate(state.x))
        objective = total_objective(problem, xs)
        primal_res = float(np.linalg.norm(r))

        state.x = xs
        state.z = [x.copy() for x in xs]
        state.gamma = [res.gamma if res.gamma.size else g for res, g in zip(results, state.gamma)]
        state.lam = lam + step * r
        trace.record(
            objective=objective,
            primal_res=primal_res,
            dual_res=dual_res,
            step_norm=step_norm,
            seconds=time.perf_counter() - start,
            dual_value=objective + float(lam @ r),
        )
        logger.debug(f"{solver} iter {k}: primal_res={primal_res:.3e} dual_res={dual_res:.3e}")

        if _converged(cfg, primal_res, dual_res):
            status = SolveStatus.CONVERGED
            break
        if detect_oscillation and is_oscillating(
            trace.primal_history(), settings.oscillation_window, 10.0 * cfg.tol_primal
        ):
            status = SolveStatus.OSCILLATING
            break

    logger.info(f"{solver}: status={status.value} iterations={len(trace)}")
    return SolveResult(state=state, trace=trace, status=status, iterations=len(trace), solver=solver)


def dual_ascent(problem: SeparableProblem, cfg: Optional[SolverConfig] = None) -> SolveResult:
    """Dual gradient ascent on the stacked problem.

    x^{k+1} = argmin_x L(x, lambda^k); lambda^{k+1} = lambda^k + alpha (A x^{k+1} - b).
    The trace's dual_value column holds L(x^{k+1}, lambda^k), the dual
    function value at lambda^k.
    """
    cfg = cfg or SolverConfig()
    _require_equality_only(problem, "dual ascent")
    merged = _merged(problem)
    result = _multiplier_loop(
        merged, cfg, "dual-ascent", 0.0, cfg.alpha, False, _initial_state(merged, cfg)
    )
    result.state = _unmerge(problem, merged, result.state)
    return result


def dual_decomposition(problem: SeparableProblem, cfg: Optional[SolverConfig] = None) -> SolveResult:
    """Dual ascent with the x-update split into independent block argmins.

    Blocks run through map_blocks; a coupling residual that stalls over the
    oscillation window while above 10 * tol_primal stops the run as oscillating.
    """
    cfg = cfg or SolverConfig()
    _require_equality_only(problem, "dual decomposition")
    return _multiplier_loop(
        problem, cfg, "dual-decomp", 0.0, cfg.alpha, True, _initial_state(problem, cfg)
    )


def _warm_start_optimal(problem: SeparableProblem, state: IterateState, cfg: SolverConfig) -> bool:
    r = coupling_residual(problem, state.x)
    if float(np.linalg.norm(r)) > cfg.tol_primal:
        return False
    for block, x, gamma in zip(problem.blocks, state.x, state.gamma):
        stationarity = block.f.gradient(x) + block.A.T @ state.lam
        if block.g is not None and gamma.size:
            stationarity = stationarity + block.g.jacobian(x).T @ gamma
        if float(np.linalg.norm(stationarity)) > cfg.tol_dual * (1.0 + float(np.linalg.norm(state.lam))):
            return False
    return True


def method_of_multipliers(
    problem: SeparableProblem,
    cfg: Optional[SolverConfig] = None,
    state: Optional[IterateState] = None,
) -> SolveResult:
    """Augmented-Lagrangian method on the stacked problem; dual step exactly rho.

    Args:
        problem: Problem; blocks are merged into one.
        cfg: Options (rho > 0 required).
        state: Optional warm start. A start that already satisfies the
            stopping test returns after the check with zero iterations.

    Returns:
        SolveResult with per-block state.
    """
    cfg = cfg or SolverConfig()
    if cfg.rho <= 0:
        raise ValueError("method of multipliers requires rho > 0")
    _require_equality_only(problem, "method of multipliers")

    if state is not None:
        state = state.copy()
        state.validate(problem)
        if _warm_start_optimal(problem, state, cfg):
            trace = ConvergenceTrace()
            trace.record(
                objective=total_objective(problem, state.x),
                primal_res=float(np.linalg.norm(coupling_residual(problem, state.x))),
                dual_res=0.0,
                step_norm=0.0,
                seconds=0.0,
            )
            logger.info("mom: warm start already optimal")
            return SolveResult(
                state=state, trace=trace, status=SolveStatus.CONVERGED, iterations=0, solver="mom"
            )

    merged = _merged(problem)
    if state is None:
        initial = _initial_state(merged, cfg)
    elif merged is problem:
        initial = state
    else:
        x = np.concatenate(state.x)
        initial = IterateState(
            x=[x], z=[x.copy()], lam=state.lam.copy(), gamma=[np.zeros(0)], mu=[np.zeros(0)]
        )

    result = _multiplier_loop(merged, cfg, "mom", cfg.rho, cfg.rho, False, initial)
    result.state = _unmerge(problem, merged, result.state)
    return result


def admm_two_block(
    f: ScalarField,
    g: ScalarField,
    A: Matrix,
    B: Matrix,
    c: Vector,
    cfg: Optional[SolverConfig] = None,
    x0: Optional[Vector] = None,
    z0: Optional[Vector] = None,
) -> SolveResult:
    """ADMM for min f(x) + g(z) s.t. A x + B z = c.

    Alternates the x-argmin, the z-argmin and y <- y + rho (A x + B z - c).
    The returned state holds x = [x, z] and lam = y.
    """
    cfg = cfg or SolverConfig()
    if cfg.rho <= 0:
        raise ValueError("ADMM requires rho > 0")
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    c = np.asarray(c, dtype=float).reshape(-1)
    if A.shape != (c.shape[0], f.dim) or B.shape != (c.shape[0], g.dim):
        raise DimensionError(
            f"A {A.shape} and B {B.shape} must have {c.shape[0]} rows and {f.dim}/{g.dim} columns"
        )

    radius = get_settings().divergence_radius
    x = np.zeros(f.dim) if x0 is None else np.array(x0, dtype=float)
    z = np.zeros(g.dim) if z0 is None else np.array(z0, dtype=float)
    if cfg.init_jitter > 0:
        rng = np.random.default_rng(cfg.seed)
        x = x + cfg.init_jitter * rng.standard_normal(f.dim)
        z = z + cfg.init_jitter * rng.standard_normal(g.dim)
    y = np.zeros(c.shape[0])
    trace = ConvergenceTrace()
    status = SolveStatus.MAX_ITER
    start = time.perf_counter()

    logger.info(f"admm: n_x={f.dim} n_z={g.dim} rows={c.shape[0]} rho={cfg.rho}")
    for k in range(cfg.max_iter):
        x_sub = BlockSubproblem(f=f, linear=A.T @ y, rho=cfg.rho, M=A, target=c - B @ z, center=x)
        x_res = minimize_block(x_sub, x, cfg.inner_tol, radius)
        if not x_res.ok:
            status = SolveStatus.DIVERGED
            break
        z_sub = BlockSubproblem(f=g, linear=B.T @ y, rho=cfg.rho, M=B, target=c - A @ x_res.x, center=z)
        z_res = minimize_block(z_sub, z, cfg.inner_tol, radius)
        if not z_res.ok:
            status = SolveStatus.DIVERGED
            break

        r = A @ x_res.x + B @ z_res.x - c
        step_norm, dual_res = _relative_step(
            np.concatenate([x_res.x, z_res.x]), np.concatenate([x, z])
        )
        x, z = x_res.x, z_res.x
        y = y + cfg.rho * r
        primal_res = float(np.linalg.norm(r))
        trace.record(
            objective=f(x) + g(z),
            primal_res=primal_res,
            dual_res=dual_res,
            step_norm=step_norm,
            seconds=time.perf_counter() - start,
        )
        if _converged(cfg, primal_res, dual_res):
            status = SolveStatus.CONVERGED
            break

    logger.info(f"admm: status={status.value} iterations={len(trace)}")
    state = IterateState(x=[x, z], z=[x.copy(), z.copy()], lam=y)
    return SolveResult(state=state, trace=trace, status=status, iterations=len(trace), solver="admm")


def consensus_dim(problem: SeparableProblem) -> int:
    """Number of leading components shared by all blocks of a consensus problem."""
    if not problem.consensus:
        raise UnsupportedProblemError(f"problem '{problem.name}' is not in consensus form")
    if problem.n_blocks == 1:
        return problem.blocks[0].n
    return problem.m_c // (problem.n_blocks - 1)


def _consensus_argmin(
    block: LocalBlock,
    y: Vector,
    z: Vector,
    x_prev: Vector,
    rho: float,
    tol: float,
    radius: float,
) -> InnerResult:
    d = z.shape[0]
    E = np.eye(d, block.n)
    sub = BlockSubproblem(f=block.f, linear=E.T @ y, rho=rho, M=E, target=z, center=x_prev)
    return minimize_block(sub, x_prev, tol, radius, g=block.g)


def _consensus_dual(y: Vector, x: Vector, z: Vector, rho: float) -> Vector:
    return y + rho * (x[: z.shape[0]] - z)


def consensus_z_update(xs: Sequence[Vector], ys: Sequence[Vector], rho: float) -> Vector:
    """Central z-update: argmin_z sum_i -y_i^T z + (rho/2)||x_i - z||^2 = mean_i (x_i + y_i / rho).

    Only the leading len(y_i) components of each x_i take part.
    """
    if rho <= 0:
        raise ValueError(f"rho must be positive, got {rho}")
    if len(xs) != len(ys) or not xs:
        raise DimensionError(f"got {len(xs)} block points for {len(ys)} duals")
    d = ys[0].shape[0]
    total = np.zeros(d)
    for x, y in zip(xs, ys):
        total = total + (x[:d] + y / rho)
    return total / len(xs)


def consensus_admm(problem: SeparableProblem, cfg: Optional[SolverConfig] = None) -> SolveResult:
    """Consensus ADMM: block argmins, central average, per-block dual updates.

    x_i <- argmin f_i(x_i) + y_i^T (x_i - z) + (rho/2)||x_i - z||^2
    z   <- mean_i (x_i + y_i / rho)
    y_i <- y_i + rho (x_i - z)

    Only the leading consensus_dim components of each block are shared. The
    coupling multiplier of the equivalent x_1 = x_i form is lambda_{i-1} = -y_i.
    """
    cfg = cfg or SolverConfig()
    if cfg.rho <= 0:
        raise ValueError("consensus ADMM requires rho > 0")
    _require_equality_only(problem, "consensus ADMM")
    d = consensus_dim(problem)
    radius = get_settings().divergence_radius

    state = _initial_state(problem, cfg)
    z = np.mean([x[:d] for x in state.x], axis=0)
    ys = [np.zeros(d) for _ in problem.blocks]
    trace = ConvergenceTrace()
    status = SolveStatus.MAX_ITER
    start = time.perf_counter()

    logger.info(f"consensus-admm: {problem.n_blocks} block(s), shared dim {d}, rho={cfg.rho}")
    for k in range(cfg.max_iter):
        z_snapshot = z.copy()
        tasks = [
            partial(_consensus_argmin, block, y, z_snapshot, x_prev, cfg.rho, cfg.inner_tol, radius)
            for block, y, x_prev in zip(problem.blocks, ys, state.x)
        ]
        results = map_blocks(tasks, cfg.execution).results
        failed = [i for i, res in enumerate(results) if not res.ok]
        if failed:
            logger.warning(f"consensus-admm: block argmin diverged at iteration {k} (blocks {failed})")
            status = SolveStatus.DIVERGED
            break
        stalled = [i for i, res in enumerate(results) if res.stalled]
        if stalled:
            logger.debug(f"consensus-admm: block argmin stopped short of tolerance at iteration {k} (blocks {stalled})")

        xs = [res.x for res in results]
        z = consensus_z_update(xs, ys, cfg.rho)
        ys = map_blocks(
            [partial(_consensus_dual, y, x, z, cfg.rho) for y, x in zip(ys, xs)], cfg.execution
        ).results

        r = coupling_residual(problem, xs)
        step_norm, dual_res = _relative_step(np.concatenate(xs), np.concatenate(state.x))
        primal_res = float(np.linalg.norm(r))
        state.x = xs
        state.z = [np.concatenate([z, x[d:]]) for x in xs]
        state.gamma = [res.gamma if res.gamma.size else g for res, g in zip(results, state.gamma)]
        state.lam = -np.concatenate(ys[1:]) if problem.n_blocks > 1 else np.zeros(0)
        trace.record(
            objective=total_objective(problem, xs),
            primal_res=primal_res,
            dual_res=dual_res,
            step_norm=step_norm,
            seconds=time.perf_counter() - start,
        )
        if _converged(cfg, primal_res, dual_res):
            status = SolveStatus.CONVERGED
            break

    logger.info(f"consensus-admm: status={status.value} iterations={len(trace)}")
    return SolveResult(
        state=state, trace=trace, status=status, iterations=len(trace), solver="consensus-admm"
    )


def duality_gap_estimate(
    problem: SeparableProblem,
    xs: Sequence[Vector],
    lam: Vector,
    cfg: Optional[SolverConfig] = None,
) -> GapEstimate:
    """f(x) - g(lambda) with g(lambda) = min_x L(x, lambda) solved blockwise.

    An unbounded inner minimization reports gap = dual_value = -inf with the
    diverged flag set.
    """
    cfg = cfg or SolverConfig()
    _require_equality_only(problem, "duality gap estimate")
    lam = np.asarray(lam, dtype=float).reshape(-1)
    if lam.shape != (problem.m_c,):
        raise DimensionError(f"lambda has length {lam.shape[0]}, expected {problem.m_c}")
    radius = get_settings().divergence_radius
    primal = total_objective(problem, xs)

    argmins = []
    for block, x in zip(problem.blocks, xs):
        x = np.asarray(x, dtype=float)
        res = _lagrangian_argmin(block, lam, x, 0.0, problem.b, cfg.inner_tol, radius)
        if not res.ok:
            return GapEstimate(gap=float("-inf"), dual_value=float("-inf"), diverged=True)
        argmins.append(res.x)

    dual_value = total_objective(problem, argmins) + float(lam @ coupling_residual(problem, argmins))
    return GapEstimate(gap=primal - dual_value, dual_value=dual_value, diverged=False)
