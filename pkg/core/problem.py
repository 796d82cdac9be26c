"""Block-separable problems with affine coupling.

    min  sum_i f_i(x_i)
    s.t. g_i(x_i) = 0, h_i(x_i) <= 0, lb_i <= x_i <= ub_i   (local)
         sum_i A_i x_i = b                                   (coupling)

Finite bounds are folded into the inequality rows of each block so that
every solver sees a single inequality pathway.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy.linalg import block_diag

from core.calculus import Matrix, ScalarField, Vector, VectorField, fd_hessian
from core.errors import DimensionError, EvaluationError, UnsupportedProblemError


logger = logging.getLogger(__name__)


def _vec(value: object) -> Vector:
    return np.asarray(value, dtype=float).reshape(-1)


@dataclass(frozen=True)
class LocalBlock:
    """One agent's subproblem.

    Attributes:
        f: Objective (analytic gradient/Hessian optional on the field).
        A: Coupling contribution, m_c x n_i.
        g: Optional equality constraints, zero at feasibility.
        h: Optional inequality constraints, feasible iff <= 0.
        lb: Lower bounds (entries may be -inf); None means unbounded.
        ub: Upper bounds (entries may be +inf); None means unbounded.
        name: Label used in logs and manifests.
    """

    f: ScalarField
    A: Matrix
    g: Optional[VectorField] = None
    h: Optional[VectorField] = None
    lb: Optional[Vector] = None
    ub: Optional[Vector] = None
    name: str = ""

    def __post_init__(self) -> None:
        n = self.f.dim
        A = np.asarray(self.A, dtype=float)
        if A.ndim == 1 and A.size == 0:
            A = np.zeros((0, n))
        A = np.atleast_2d(A)
        object.__setattr__(self, "A", A)
        lb = np.full(n, -np.inf) if self.lb is None else _vec(self.lb)
        ub = np.full(n, np.inf) if self.ub is None else _vec(self.ub)
        object.__setattr__(self, "lb", lb)
        object.__setattr__(self, "ub", ub)

    @property
    def n(self) -> int:
        return self.f.dim

    @property
    def equality_count(self) -> int:
        return 0 if self.g is None else self.g.out_dim

    @property
    def lower_rows(self) -> NDArray[np.intp]:
        return np.flatnonzero(np.isfinite(self.lb))

    @property
    def upper_rows(self) -> NDArray[np.intp]:
        return np.flatnonzero(np.isfinite(self.ub))

    @property
    def inequality_count(self) -> int:
        """Rows of h plus one row per finite bound."""
        base = 0 if self.h is None else self.h.out_dim
        return base + self.lower_rows.size + self.upper_rows.size

    @property
    def has_local_constraints(self) -> bool:
        return self.equality_count > 0 or self.inequality_count > 0

    def equalities(self, x: Vector) -> Vector:
        return np.zeros(0) if self.g is None else self.g(x)

    def equality_jacobian(self, x: Vector) -> Matrix:
        return np.zeros((0, self.n)) if self.g is None else self.g.jacobian(x)

    def inequalities(self, x: Vector) -> Vector:
        """h(x) followed by lb - x (finite rows) and x - ub (finite rows)."""
        x = _vec(x)
        parts = [] if self.h is None else [self.h(x)]
        parts.append(self.lb[self.lower_rows] - x[self.lower_rows])
        parts.append(x[self.upper_rows] - self.ub[self.upper_rows])
        return np.concatenate(parts) if parts else np.zeros(0)

    def inequality_jacobian(self, x: Vector) -> Matrix:
        eye = np.eye(self.n)
        parts = [] if self.h is None else [self.h.jacobian(x)]
        parts.append(-eye[self.lower_rows])
        parts.append(eye[self.upper_rows])
        return np.vstack(parts) if parts else np.zeros((0, self.n))

    def inequality_field(self) -> Optional[VectorField]:
        """The folded inequality rows as a single VectorField (None when empty)."""
        if self.inequality_count == 0:
            return None
        h = self.h
        return VectorField(
            self.inequalities,
            self.n,
            self.inequality_count,
            jac=self.inequality_jacobian,
            weighted_hess=(
                None
                if h is None
                else lambda x, w: h.hessian_of(x, w[: h.out_dim])
            ),
        )

    def lagrangian_hessian(
        self,
        x: Vector,
        gamma: Optional[Vector] = None,
        mu: Optional[Vector] = None,
        fd_only: bool = False,
    ) -> Matrix:
        """Hessian of f + gamma^T g + mu^T h at x (bound rows contribute nothing).

        Args:
            x: Point.
            gamma: Equality multipliers (length equality_count).
            mu: Inequality multipliers over the folded rows (length inequality_count).
            fd_only: Ignore analytic derivatives and difference function values.
        """
        x = _vec(x)
        H = fd_hessian(self.f, x) if fd_only else self.f.hessian(x)
        if self.g is not None and gamma is not None and gamma.size:
            if fd_only:
                g = self.g
                H = H + fd_hessian(lambda y: float(gamma @ g(y)), x)
            else:
                H = H + self.g.hessian_of(x, gamma)
        if self.h is not None and mu is not None and mu.size:
            weights = mu[: self.h.out_dim]
            if np.any(weights):
                if fd_only:
                    h = self.h
                    H = H + fd_hessian(lambda y: float(weights @ h(y)), x)
                else:
                    H = H + self.h.hessian_of(x, weights)
        return 0.5 * (H + H.T)


@dataclass(frozen=True)
class SeparableProblem:
    """Ordered blocks plus the coupling right-hand side.

    Attributes:
        blocks: Ordered local blocks.
        b: Coupling right-hand side (length m_c).
        z0: Optional per-block starting points.
        consensus: True when the coupling encodes x_1 = x_i for all blocks.
        name: Label used in logs and traces.
    """

    blocks: tuple[LocalBlock, ...]
    b: Vector
    z0: Optional[tuple[Vector, ...]] = None
    consensus: bool = False
    name: str = "problem"

    @property
    def m_c(self) -> int:
        return int(self.b.shape[0])

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    @property
    def dims(self) -> list[int]:
        return [block.n for block in self.blocks]

    @property
    def total_dim(self) -> int:
        return sum(self.dims)

    @property
    def offsets(self) -> list[int]:
        out = [0]
        for n in self.dims:
            out.append(out[-1] + n)
        return out

    def __iter__(self) -> Iterator[LocalBlock]:
        return iter(self.blocks)

    def stacked_coupling(self) -> Matrix:
        """[A_1, ..., A_R] as one m_c x total_dim matrix."""
        return np.hstack([block.A for block in self.blocks])

    def stack(self, xs: Sequence[Vector]) -> Vector:
        check_shapes(self, xs)
        return np.concatenate([_vec(x) for x in xs])

    def split(self, x: Vector) -> list[Vector]:
        x = _vec(x)
        if x.shape[0] != self.total_dim:
            raise DimensionError(f"stacked vector has length {x.shape[0]}, expected {self.total_dim}")
        off = self.offsets
        return [x[off[i] : off[i + 1]].copy() for i in range(self.n_blocks)]

    def start(self) -> list[Vector]:
        """Per-block starting points (zeros clipped into bounds when none given)."""
        if self.z0 is not None:
            return [np.array(z, dtype=float) for z in self.z0]
        return [np.clip(np.zeros(block.n), block.lb, block.ub) for block in self.blocks]

    def as_single_block(self) -> LocalBlock:
        """Merge all blocks into one (the stacked problem with the same coupling)."""
        if self.n_blocks == 1:
            return self.blocks[0]
        if any(block.has_local_constraints for block in self.blocks):
            raise UnsupportedProblemError("cannot merge blocks that carry local constraints")

        problem = self

        def fn(x: Vector) -> float:
            parts = problem.split(x)
            return math.fsum(block.f(xi) for block, xi in zip(problem.blocks, parts))

        def grad(x: Vector) -> Vector:
            parts = problem.split(x)
            return np.concatenate([block.f.gradient(xi) for block, xi in zip(problem.blocks, parts)])

        def hess(x: Vector) -> Matrix:
            parts = problem.split(x)
            return block_diag(*[block.f.hessian(xi) for block, xi in zip(problem.blocks, parts)])

        return LocalBlock(
            f=ScalarField(fn, self.total_dim, grad=grad, hess=hess),
            A=self.stacked_coupling(),
            name=f"{self.name}-stacked",
        )


@dataclass
class IterateState:
    """Mutable iterate owned by exactly one solver loop.

    Attributes:
        x: Per-block primal vectors.
        z: Per-block auxiliary vectors (same shapes as x).
        lam: Coupling multiplier (length m_c).
        gamma: Per-block equality multipliers.
        mu: Per-block inequality multipliers (>= 0).
    """

    x: list[Vector]
    z: list[Vector]
    lam: Vector
    gamma: list[Vector] = field(default_factory=list)
    mu: list[Vector] = field(default_factory=list)

    @classmethod
    def initial(cls, problem: SeparableProblem) -> "IterateState":
        start = problem.start()
        return cls(
            x=[s.copy() for s in start],
            z=[s.copy() for s in start],
            lam=np.zeros(problem.m_c),
            gamma=[np.zeros(block.equality_count) for block in problem.blocks],
            mu=[np.zeros(block.inequality_count) for block in problem.blocks],
        )

    def copy(self) -> "IterateState":
        return IterateState(
            x=[v.copy() for v in self.x],
            z=[v.copy() for v in self.z],
            lam=self.lam.copy(),
            gamma=[v.copy() for v in self.gamma],
            mu=[v.copy() for v in self.mu],
        )

    def validate(self, problem: SeparableProblem) -> None:
        """Raise DimensionError unless shapes match problem and mu >= 0."""
        check_shapes(problem, self.x)
        check_shapes(problem, self.z)
        if self.lam.shape != (problem.m_c,):
            raise DimensionError(f"lambda has shape {self.lam.shape}, expected ({problem.m_c},)")
        for i, mu in enumerate(self.mu):
            if np.any(mu < 0):
                raise DimensionError("inequality multipliers must be non-negative", block_index=i)


@dataclass(frozen=True, slots=True)
class TraceRecord:
    """One iteration of a solve.

    Attributes:
        iteration: Zero-based iteration index.
        objective: Total objective at the iterate.
        primal_res: L2 norm of the coupling residual.
        dual_res: Relative primal step ||x_k - x_{k-1}|| / (1 + ||x_{k-1}||) for the
            distributed solvers; the stationarity norm for the centralized solve.
            It is not the ADMM dual residual rho ||A (z_k - z_{k-1})||.
        step_norm: L2 norm of the primal step.
        seconds: Wall-clock seconds since the solve started.
        dual_value: Dual function estimate g(lambda), when the method provides one.
    """

    iteration: int
    objective: float
    primal_res: float
    dual_res: float
    step_norm: float
    seconds: float
    dual_value: float = float("nan")


class ConvergenceTrace:
    """Ordered per-iteration records with strictly increasing indices from 0."""

    def __init__(self) -> None:
        self._records: list[TraceRecord] = []

    def append(self, record: TraceRecord) -> None:
        expected = len(self._records)
        if record.iteration != expected:
            raise ValueError(f"trace expects iteration {expected}, got {record.iteration}")
        if record.seconds < 0:
            raise ValueError("wall-clock seconds must be non-negative")
        self._records.append(record)

    def record(
        self,
        objective: float,
        primal_res: float,
        dual_res: float,
        step_norm: float,
        seconds: float,
        dual_value: float = float("nan"),
    ) -> TraceRecord:
        """Append the next record and return it."""
        rec = TraceRecord(
            iteration=len(self._records),
            objective=float(objective),
            primal_res=float(primal_res),
            dual_res=float(dual_res),
            step_norm=float(step_norm),
            seconds=max(0.0, float(seconds)),
            dual_value=float(dual_value),
        )
        self.append(rec)
        return rec

    @property
    def records(self) -> list[TraceRecord]:
        return list(self._records)

    @property
    def last(self) -> Optional[TraceRecord]:
        return self._records[-1] if self._records else None

    def primal_history(self) -> list[float]:
        return [r.primal_res for r in self._records]

    def numeric_rows(self, include_seconds: bool = False) -> list[tuple[float, ...]]:
        """Trace rows as tuples, wall-clock excluded unless requested."""
        rows = []
        for r in self._records:
            row: tuple[float, ...] = (r.iteration, r.objective, r.primal_res, r.dual_res, r.step_norm)
            rows.append(row + ((r.seconds,) if include_seconds else ()))
        return rows

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[TraceRecord]:
        return iter(self._records)


def check_shapes(problem: SeparableProblem, xs: Sequence[Vector]) -> None:
    """Raise DimensionError unless xs matches the block dimensions."""
    if len(xs) != problem.n_blocks:
        raise DimensionError(f"got {len(xs)} block vectors, problem has {problem.n_blocks} blocks")
    for i, (block, x) in enumerate(zip(problem.blocks, xs)):
        if np.shape(x) != (block.n,):
            raise DimensionError(
                f"block {i} vector has shape {np.shape(x)}, expected ({block.n},)",
                block_index=i,
            )


def build_problem(
    blocks: Sequence[LocalBlock],
    b: Vector,
    z0: Optional[Sequence[Vector]] = None,
    consensus: bool = False,
    name: str = "problem",
) -> SeparableProblem:
    """Validate blocks and coupling and build the problem.

    Args:
        blocks: Non-empty ordered blocks.
        b: Coupling right-hand side.
        z0: Optional per-block starting points.
        consensus: Mark the coupling as consensus form.
        name: Label for logs and traces.

    Returns:
        Validated SeparableProblem.

    Raises:
        DimensionError: Naming the offending block index.
    """
    if not blocks:
        raise DimensionError("a problem needs at least one block")
    b = _vec(b)
    m_c = b.shape[0]

    for i, block in enumerate(blocks):
        if block.A.ndim != 2:
            raise DimensionError(f"block {i}: A must be a matrix", block_index=i)
        if block.A.shape[1] != block.n:
            raise DimensionError(
                f"block {i}: A has {block.A.shape[1]} columns but dimension is {block.n}",
                block_index=i,
            )
        if block.A.shape[0] != m_c:
            raise DimensionError(
                f"block {i}: A has {block.A.shape[0]} rows but b has length {m_c}",
                block_index=i,
            )
        if block.lb.shape != (block.n,) or block.ub.shape != (block.n,):
            raise DimensionError(f"block {i}: bound vectors must have length {block.n}", block_index=i)
        if np.any(block.lb > block.ub):
            raise DimensionError(f"block {i}: lower bound exceeds upper bound", block_index=i)
        for label, constraint in (("g", block.g), ("h", block.h)):
            if constraint is not None and constraint.in_dim != block.n:
                raise DimensionError(
                    f"block {i}: {label} accepts dimension {constraint.in_dim}, expected {block.n}",
                    block_index=i,
                )

    start: Optional[tuple[Vector, ...]] = None
    if z0 is not None:
        start = tuple(_vec(z) for z in z0)
        if len(start) != len(blocks):
            raise DimensionError(f"got {len(start)} start vectors for {len(blocks)} blocks")
        for i, (block, z) in enumerate(zip(blocks, start)):
            if z.shape != (block.n,):
                raise DimensionError(f"block {i}: start vector has length {z.shape[0]}", block_index=i)

    problem = SeparableProblem(tuple(blocks), b, z0=start, consensus=consensus, name=name)
    logger.debug(f"Built problem '{name}': {problem.n_blocks} blocks, m_c={m_c}, n={problem.total_dim}")
    return problem


def build_consensus_problem(
    objectives: Sequence[ScalarField],
    equalities: Optional[Sequence[Optional[VectorField]]] = None,
    coupled_dim: Optional[int] = None,
    z0: Optional[Sequence[Vector]] = None,
    name: str = "consensus",
) -> SeparableProblem:
    """Consensus form x_1 = x_i (i = 2..N) encoded through stacked identities.

    Block 1 carries the identity repeated N - 1 times; block i carries a
    negative identity in row block i - 1; b = 0.

    Args:
        objectives: Per-block objectives of equal dimension.
        equalities: Optional per-block equality constraints.
        coupled_dim: Number of leading components that must agree
            (default: the full dimension).
        z0: Optional per-block starting points.
        name: Problem label.
    """
    if not objectives:
        raise DimensionError("a consensus problem needs at least one block")
    dims = [f.dim for f in objectives]
    d = min(dims) if coupled_dim is None else coupled_dim
    if coupled_dim is None and len(set(dims)) != 1:
        raise DimensionError("consensus blocks must share a dimension")
    if d > min(dims):
        raise DimensionError(f"coupled dimension {d} exceeds the smallest block dimension")

    count = len(objectives)
    rows = d * (count - 1)
    blocks = []
    for i, f in enumerate(objectives):
        A = np.zeros((rows, f.dim))
        if i == 0:
            for k in range(count - 1):
                A[k * d : (k + 1) * d, :d] = np.eye(d)
        else:
            A[(i - 1) * d : i * d, :d] = -np.eye(d)
        g = None if equalities is None else equalities[i]
        blocks.append(LocalBlock(f=f, A=A, g=g, name=f"{name}-{i}"))

    return build_problem(blocks, np.zeros(rows), z0=z0, consensus=True, name=name)


def coupling_residual(problem: SeparableProblem, xs: Sequence[Vector]) -> Vector:
    """sum_i A_i x_i - b, accumulated in block order."""
    check_shapes(problem, xs)
    r = -problem.b.copy()
    for block, x in zip(problem.blocks, xs):
        r = r + block.A @ x
    return r


def total_objective(problem: SeparableProblem, xs: Sequence[Vector]) -> float:
    """sum_i f_i(x_i).

    Raises:
        EvaluationError: Naming the first block with a non-finite value.
    """
    check_shapes(problem, xs)
    total = 0.0
    for i, (block, x) in enumerate(zip(problem.blocks, xs)):
        value = block.f(x)
        if not math.isfinite(value):
            raise EvaluationError(f"block {i} objective is not finite ({value})", block=i)
        total += value
    return total


def augmented_lagrangian(
    problem: SeparableProblem,
    xs: Sequence[Vector],
    lam: Vector,
    rho: float,
) -> float:
    """sum f_i(x_i) + lambda^T r + (rho / 2) ||r||^2 with r the coupling residual."""
    if rho < 0:
        raise ValueError(f"rho must be non-negative, got {rho}")
    lam = _vec(lam)
    if lam.shape != (problem.m_c,):
        raise DimensionError(f"lambda has length {lam.shape[0]}, expected {problem.m_c}")
    r = coupling_residual(problem, xs)
    return total_objective(problem, xs) + float(lam @ r) + 0.5 * rho * float(r @ r)
