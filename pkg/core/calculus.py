"""Finite-difference differential operators, Newton-Raphson and norms.

Central differences are used throughout. Default steps scale with the
coordinate magnitude: cbrt(eps) * (1 + |x_j|) for first derivatives and
eps**0.25 * (1 + |x_j|) for second derivatives.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
from numpy.typing import NDArray

from core.errors import (
    DimensionError,
    EvaluationError,
    NonConvergenceError,
    NotPositiveSemidefiniteError,
    SingularDerivativeError,
)
from core.kkt import is_positive_semidefinite


logger = logging.getLogger(__name__)


Vector = NDArray[np.float64]
Matrix = NDArray[np.float64]

EPS = float(np.finfo(float).eps)
GRADIENT_STEP = EPS ** (1.0 / 3.0)
HESSIAN_STEP = EPS ** 0.25
DERIVATIVE_FLOOR = 1e-12


@dataclass(frozen=True)
class ScalarField:
    """Scalar function f: R^dim -> R with optional analytic derivatives.

    Attributes:
        fn: Callable mapping a point to a real scalar.
        dim: Length of accepted points.
        grad: Optional analytic gradient.
        hess: Optional analytic Hessian.
    """

    fn: Callable[[Vector], float]
    dim: int
    grad: Optional[Callable[[Vector], Vector]] = None
    hess: Optional[Callable[[Vector], Matrix]] = None

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise DimensionError(f"ScalarField dim must be positive, got {self.dim}")

    def __call__(self, x: Vector) -> float:
        return float(self.fn(np.asarray(x, dtype=float)))

    def gradient(self, x: Vector) -> Vector:
        """Analytic gradient when available, central differences otherwise."""
        if self.grad is not None:
            return np.asarray(self.grad(np.asarray(x, dtype=float)), dtype=float).reshape(-1)
        return fd_gradient(self, x)

    def hessian(self, x: Vector) -> Matrix:
        """Analytic Hessian, else a differenced analytic gradient, else fd_hessian."""
        if self.hess is not None:
            return np.asarray(self.hess(np.asarray(x, dtype=float)), dtype=float)
        if self.grad is not None:
            H = fd_jacobian(VectorField(self.grad, self.dim, self.dim), x)
            return 0.5 * (H + H.T)
        return fd_hessian(self, x)


@dataclass(frozen=True)
class VectorField:
    """Vector function F: R^in_dim -> R^out_dim with optional derivatives.

    Attributes:
        fn: Callable mapping a point to a vector of length out_dim.
        in_dim: Length of accepted points.
        out_dim: Length of returned vectors.
        jac: Optional analytic Jacobian (out_dim x in_dim).
        weighted_hess: Optional callable (x, w) -> Hessian of w^T F at x.
    """

    fn: Callable[[Vector], Vector]
    in_dim: int
    out_dim: int
    jac: Optional[Callable[[Vector], Matrix]] = None
    weighted_hess: Optional[Callable[[Vector, Vector], Matrix]] = None

    def __post_init__(self) -> None:
        if self.in_dim < 1 or self.out_dim < 0:
            raise DimensionError(
                f"VectorField dims must be positive, got {self.in_dim} -> {self.out_dim}"
            )

    def __call__(self, x: Vector) -> Vector:
        out = np.asarray(self.fn(np.asarray(x, dtype=float)), dtype=float).reshape(-1)
        if out.shape[0] != self.out_dim:
            raise DimensionError(f"VectorField returned length {out.shape[0]}, expected {self.out_dim}")
        return out

    def jacobian(self, x: Vector) -> Matrix:
        if self.jac is not None:
            J = np.asarray(self.jac(np.asarray(x, dtype=float)), dtype=float)
            return J.reshape(self.out_dim, self.in_dim)
        return fd_jacobian(self, x)

    def hessian_of(self, x: Vector, w: Vector) -> Matrix:
        """Hessian of w^T F at x."""
        w = np.asarray(w, dtype=float).reshape(-1)
        if self.out_dim == 0 or not np.any(w):
            return np.zeros((self.in_dim, self.in_dim))
        if self.weighted_hess is not None:
            return np.asarray(self.weighted_hess(np.asarray(x, dtype=float), w), dtype=float)
        if self.jac is not None:
            jac = self.jacobian
            H = fd_jacobian(VectorField(lambda y: jac(y).T @ w, self.in_dim, self.in_dim), x)
            return 0.5 * (H + H.T)
        return fd_hessian(lambda y: float(w @ self(y)), x)


ScalarLike = Union[ScalarField, Callable[[Vector], float]]
VectorLike = Union[VectorField, Callable[[Vector], Vector]]


def _steps(x: Vector, h: Optional[float], base: float) -> Vector:
    if h is not None:
        if h <= 0:
            raise ValueError(f"step width must be positive, got {h}")
        return np.full(x.shape, float(h))
    return base * (1.0 + np.abs(x))


def _scalar_at(f: ScalarLike, point: Vector, coordinate: Optional[int]) -> float:
    value = float(f(point))
    if not math.isfinite(value):
        raise EvaluationError(
            f"non-finite function value {value} at stencil coordinate {coordinate}",
            coordinate=coordinate,
        )
    return value


def _vector_at(F: VectorLike, point: Vector, coordinate: Optional[int]) -> Vector:
    value = np.asarray(F(point), dtype=float).reshape(-1)
    if not np.all(np.isfinite(value)):
        raise EvaluationError(
            f"non-finite function value at stencil coordinate {coordinate}",
            coordinate=coordinate,
        )
    return value


def fd_gradient(f: ScalarLike, x: Vector, h: Optional[float] = None) -> Vector:
    """Central-difference gradient.

    Args:
        f: Scalar function.
        x: Evaluation point.
        h: Step width; defaults to cbrt(eps) * (1 + |x_j|) per coordinate.

    Returns:
        Gradient approximation of length len(x).

    Raises:
        EvaluationError: If f is non-finite at a stencil point.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    steps = _steps(x, h, GRADIENT_STEP)
    grad = np.empty(x.shape[0])
    for j in range(x.shape[0]):
        xp = x.copy()
        xm = x.copy()
        xp[j] += steps[j]
        xm[j] -= steps[j]
        grad[j] = (_scalar_at(f, xp, j) - _scalar_at(f, xm, j)) / (xp[j] - xm[j])
    return grad


def fd_jacobian(F: VectorLike, x: Vector, h: Optional[float] = None) -> Matrix:
    """Central-difference Jacobian; row i is the gradient of component i.

    Args:
        F: Vector function.
        x: Evaluation point.
        h: Step width; defaults as in fd_gradient.

    Returns:
        Matrix of shape (len(F(x)), len(x)).
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    steps = _steps(x, h, GRADIENT_STEP)
    columns = []
    for j in range(x.shape[0]):
        xp = x.copy()
        xm = x.copy()
        xp[j] += steps[j]
        xm[j] -= steps[j]
        columns.append((_vector_at(F, xp, j) - _vector_at(F, xm, j)) / (xp[j] - xm[j]))
    if not columns:
        return np.zeros((0, 0))
    return np.column_stack(columns)


def fd_hessian(f: ScalarLike, x: Vector, h: Optional[float] = None) -> Matrix:
    """Second central differences, symmetrized as (H + H^T) / 2.

    Args:
        f: Scalar function.
        x: Evaluation point.
        h: Step width; defaults to eps**0.25 * (1 + |x_j|) per coordinate.

    Returns:
        Symmetric dim x dim matrix.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    n = x.shape[0]
    steps = _steps(x, h, HESSIAN_STEP)
    f0 = _scalar_at(f, x, None)
    H = np.zeros((n, n))

    def shifted(i: int, si: float, j: int, sj: float) -> float:
        y = x.copy()
        y[i] += si
        y[j] += sj
        return _scalar_at(f, y, i)

    for i in range(n):
        hi = steps[i]
        fp = shifted(i, hi, i, 0.0)
        fm = shifted(i, -hi, i, 0.0)
        H[i, i] = (fp - 2.0 * f0 + fm) / (hi * hi)
        for j in range(i + 1, n):
            hj = steps[j]
            H[i, j] = (
                shifted(i, hi, j, hj)
                - shifted(i, hi, j, -hj)
                - shifted(i, -hi, j, hj)
                + shifted(i, -hi, j, -hj)
            ) / (4.0 * hi * hj)
            H[j, i] = H[i, j]
    return 0.5 * (H + H.T)


def newton_raphson(
    f: Callable[[float], float],
    df: Callable[[float], float],
    x0: float,
    tol: float = 1e-10,
    max_iter: int = 50,
    derivative_floor: float = DERIVATIVE_FLOOR,
) -> float:
    """Scalar Newton-Raphson root finder, x_{n+1} = x_n - f(x_n) / f'(x_n).

    Args:
        f: Function whose root is sought.
        df: Its derivative.
        x0: Starting point.
        tol: Accept x once |f(x)| <= tol.
        max_iter: Maximum number of Newton updates.
        derivative_floor: |f'(x)| below this raises.

    Returns:
        Root estimate.

    Raises:
        SingularDerivativeError: If |f'(x_n)| falls below the floor.
        NonConvergenceError: If max_iter updates do not reach tol.
    """
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    if max_iter < 1:
        raise ValueError(f"max_iter must be >= 1, got {max_iter}")

    x = float(x0)
    for _ in range(max_iter):
        fx = float(f(x))
        dfx = float(df(x))
        if abs(dfx) < derivative_floor:
            raise SingularDerivativeError(f"derivative {dfx:.3e} below floor at x={x}", iterate=x)
        if abs(fx) <= tol:
            return x
        x = x - fx / dfx

    fx = float(f(x))
    if abs(fx) <= tol:
        return x
    raise NonConvergenceError(
        f"Newton-Raphson did not converge in {max_iter} iterations (|f|={abs(fx):.3e})",
        last_iterate=x,
        residual=abs(fx),
    )


def weighted_norm(x: Vector, Sigma: Matrix, tol: float = 1e-10) -> float:
    """Weighted norm sqrt(x^T Sigma x).

    Args:
        x: Vector.
        Sigma: Symmetric positive semidefinite weight.
        tol: Tolerance for the PSD test and for small negative quadratic forms.

    Returns:
        Non-negative weighted norm.

    Raises:
        DimensionError: If shapes disagree.
        NotPositiveSemidefiniteError: If Sigma is not PSD.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    Sigma = np.atleast_2d(np.asarray(Sigma, dtype=float))
    if Sigma.shape != (x.shape[0], x.shape[0]):
        raise DimensionError(f"Sigma shape {Sigma.shape} does not match vector length {x.shape[0]}")
    if not is_positive_semidefinite(Sigma, tol):
        raise NotPositiveSemidefiniteError("weight matrix is not symmetric positive semidefinite")
    q = float(x @ Sigma @ x)
    if q < -tol * max(1.0, float(x @ x)):
        raise NotPositiveSemidefiniteError(f"negative quadratic form {q:.3e}")
    return math.sqrt(max(q, 0.0))
