"""Dense KKT assembly and solution.

Saddle-point systems

    [[H, -A^T],
     [A,  0  ]] [p; p_lambda] = [rhs_top; rhs_bottom]

are solved by a symmetric-indefinite (Bunch-Kaufman) factorization after
negating the second block row, which leaves the singular values unchanged.
A condition estimate guards every solve; the problems handled here stay
small enough for dense storage.
"""

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from numpy.typing import NDArray

from core.errors import DimensionError, SingularKktError


logger = logging.getLogger(__name__)


SYMMETRY_TOL = 1e-10
CONDITION_LIMIT = 1e12


def _as_matrix(value: object, name: str) -> NDArray[np.float64]:
    mat = np.atleast_2d(np.asarray(value, dtype=float))
    if mat.ndim != 2:
        raise DimensionError(f"{name} must be a matrix, got shape {mat.shape}")
    return mat


def _scale(M: NDArray[np.float64]) -> float:
    return max(1.0, float(np.max(np.abs(M)))) if M.size else 1.0


def is_symmetric(M: NDArray[np.float64], tol: float = SYMMETRY_TOL) -> bool:
    """Check symmetry within a tolerance relative to the largest entry."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        return False
    return bool(np.max(np.abs(M - M.T), initial=0.0) <= tol * _scale(M))


def is_positive_semidefinite(M: NDArray[np.float64], tol: float = SYMMETRY_TOL) -> bool:
    """Check that M is symmetric with no eigenvalue below -tol.

    Args:
        M: Square matrix.
        tol: Tolerance for both the symmetry test and the eigenvalue bound,
            relative to the largest entry of M.

    Returns:
        True iff M is symmetric positive semidefinite within tol.
    """
    M = np.asarray(M, dtype=float)
    if not is_symmetric(M, tol):
        return False
    if M.size == 0:
        return True
    eigenvalues = np.linalg.eigvalsh(0.5 * (M + M.T))
    return bool(eigenvalues[0] >= -tol * _scale(M))


def min_eigenvalue(M: NDArray[np.float64]) -> float:
    """Smallest eigenvalue of the symmetric part of M (inf for an empty matrix)."""
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return float("inf")
    return float(np.linalg.eigvalsh(0.5 * (M + M.T))[0])


def regularize_spd(H: NDArray[np.float64], delta: float) -> NDArray[np.float64]:
    """Clip every eigenvalue of H up to at least delta.

    Args:
        H: Symmetric matrix.
        delta: Positive eigenvalue floor.

    Returns:
        Symmetric positive definite matrix with minimum eigenvalue >= delta.
    """
    if delta <= 0:
        raise ValueError(f"delta must be positive, got {delta}")
    H = _as_matrix(H, "H")
    if not is_symmetric(H):
        raise DimensionError("regularize_spd requires a symmetric matrix")
    eigenvalues, vectors = np.linalg.eigh(0.5 * (H + H.T))
    clipped = np.maximum(eigenvalues, delta)
    out = (vectors * clipped) @ vectors.T
    return 0.5 * (out + out.T)


def nullspace_basis(A: NDArray[np.float64], n: int, tol: float = 1e-12) -> NDArray[np.float64]:
    """Orthonormal basis of the nullspace of A via pivoted QR of A^T.

    Args:
        A: Constraint Jacobian (m x n), m may be zero.
        n: Column count (needed when A has no rows).
        tol: Relative threshold on |diag(R)| for the rank decision.

    Returns:
        n x (n - rank) matrix whose columns span null(A).
    """
    A = np.asarray(A, dtype=float).reshape(-1, n)
    if A.shape[0] == 0:
        return np.eye(n)
    Q, R, _ = scipy.linalg.qr(A.T, pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > tol * max(diag[0], 1.0))) if diag.size else 0
    return Q[:, rank:]


def solve_saddle_point(
    K: NDArray[np.float64],
    rhs: NDArray[np.float64],
    condition_limit: float = CONDITION_LIMIT,
) -> NDArray[np.float64]:
    """Solve a symmetric indefinite system with a condition guard.

    Args:
        K: Symmetric (indefinite) matrix.
        rhs: Right-hand side.
        condition_limit: Largest acceptable 1-norm condition estimate.

    Returns:
        Solution vector.

    Raises:
        SingularKktError: If K is singular or worse conditioned than the limit.
    """
    size = K.shape[0]
    try:
        with np.errstate(divide="ignore", invalid="ignore"):
            condition = float(np.linalg.cond(K, 1))
    except np.linalg.LinAlgError:
        condition = float("inf")

    if not np.isfinite(condition) or condition > condition_limit:
        rank = int(np.linalg.matrix_rank(K))
        logger.debug(f"Rejecting KKT matrix: size={size} rank={rank} cond={condition:.3e}")
        raise SingularKktError(
            f"KKT matrix is singular or ill-conditioned (cond={condition:.3e}, "
            f"rank {rank} of {size})",
            condition=condition,
            rank=rank,
            size=size,
        )

    return scipy.linalg.solve(K, rhs, assume_a="sym")


@dataclass(frozen=True)
class KktSystem:
    """Newton system for equality-constrained optimality conditions.

    Attributes:
        H: Symmetric n x n matrix (Lagrangian Hessian role).
        A: m x n matrix (constraint Jacobian role); m may be zero.
        rhs_top: Right-hand side of the first block row (length n).
        rhs_bottom: Right-hand side of the second block row (length m).
    """

    H: NDArray[np.float64]
    A: NDArray[np.float64]
    rhs_top: NDArray[np.float64]
    rhs_bottom: NDArray[np.float64]

    def __post_init__(self) -> None:
        H = _as_matrix(self.H, "H")
        n = H.shape[0]
        A = _as_matrix(self.A, "A") if np.size(self.A) else np.zeros((0, n))
        top = np.asarray(self.rhs_top, dtype=float).reshape(-1)
        bottom = np.asarray(self.rhs_bottom, dtype=float).reshape(-1)

        if H.shape != (n, n):
            raise DimensionError(f"H must be square, got {H.shape}")
        if not is_symmetric(H):
            raise DimensionError("H must be symmetric to tolerance 1e-10")
        if A.shape[1] != n:
            raise DimensionError(f"A has {A.shape[1]} columns, expected {n}")
        if top.shape[0] != n:
            raise DimensionError(f"rhs_top has length {top.shape[0]}, expected {n}")
        if A.shape[0] != bottom.shape[0]:
            raise DimensionError(
                f"A has {A.shape[0]} rows but rhs_bottom has length {bottom.shape[0]}"
            )

        object.__setattr__(self, "H", H)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "rhs_top", top)
        object.__setattr__(self, "rhs_bottom", bottom)

    @property
    def n(self) -> int:
        return self.H.shape[0]

    @property
    def m(self) -> int:
        return self.A.shape[0]

    def matrix(self) -> NDArray[np.float64]:
        """The (unsymmetric) KKT matrix [[H, -A^T], [A, 0]]."""
        return np.block([
            [self.H, -self.A.T],
            [self.A, np.zeros((self.m, self.m))],
        ])

    def rhs(self) -> NDArray[np.float64]:
        return np.concatenate([self.rhs_top, self.rhs_bottom])

    def relative_residual(self, p: NDArray[np.float64], p_lambda: NDArray[np.float64]) -> float:
        """Relative residual of a candidate solution."""
        lhs = self.matrix() @ np.concatenate([p, p_lambda])
        rhs = self.rhs()
        return float(np.linalg.norm(lhs - rhs) / max(1.0, np.linalg.norm(rhs)))


def solve_kkt(
    sys: KktSystem,
    condition_limit: float = CONDITION_LIMIT,
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Solve a KKT system.

    Args:
        sys: The system to solve.
        condition_limit: Largest acceptable condition estimate.

    Returns:
        Tuple of (p, p_lambda).

    Raises:
        SingularKktError: If the KKT matrix is singular.
    """
    H = 0.5 * (sys.H + sys.H.T)
    K = np.block([
        [H, -sys.A.T],
        [-sys.A, np.zeros((sys.m, sys.m))],
    ])
    rhs = np.concatenate([sys.rhs_top, -sys.rhs_bottom])
    solution = solve_saddle_point(K, rhs, condition_limit)
    return solution[: sys.n], solution[sys.n :]
