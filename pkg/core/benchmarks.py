"""Benchmark problem generators.

- Consensus l2-regularized logistic regression over a partitioned dataset.
- Sensor-network localization on a ring of N sensors.
- Small analytic problems (consensus quadratics, linear coupled blocks,
  random strictly convex coupled quadratics) used by the CLI and tests.

All generators are pure functions of their parameters and seed.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from numpy.random import PCG64, Generator, SeedSequence
from scipy.special import expit

from core.calculus import Matrix, ScalarField, Vector, VectorField
from core.errors import DimensionError, PartitionError
from core.problem import LocalBlock, SeparableProblem, build_consensus_problem, build_problem


logger = logging.getLogger(__name__)


DATA_SPREAD = 0.5
NORM_FLOOR = 1e-12


@dataclass(frozen=True)
class LabeledDataset:
    """Points with +-1 labels.

    Attributes:
        points: M x n_x feature matrix.
        labels: Length-M vector of -1/+1.
        seed: Generator seed, if synthetic.
    """

    points: Matrix
    labels: Vector
    seed: Optional[int] = None

    def __post_init__(self) -> None:
        points = np.atleast_2d(np.asarray(self.points, dtype=float))
        labels = np.asarray(self.labels, dtype=float).reshape(-1)
        if points.shape[0] != labels.shape[0]:
            raise DimensionError(f"{points.shape[0]} points but {labels.shape[0]} labels")
        if not np.all(np.isin(labels, (-1.0, 1.0))):
            raise ValueError("labels must be -1 or +1")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "labels", labels)

    @property
    def M(self) -> int:
        return self.points.shape[0]

    @property
    def n_x(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class SensorScene:
    """Noisy measurements of N sensors placed on a circle of radius N.

    Attributes:
        N: Sensor count.
        sigma: Measurement noise standard deviation.
        eta: 2 x (N+1) estimated positions; the last column repeats the first.
        eta_bar: Length-N measured distances between sensor i and i+1.
        seed: Generator seed.
        sigmas: Optional per-sensor noise levels (overrides sigma per sensor).
    """

    N: int
    sigma: float
    eta: Matrix
    eta_bar: Vector
    seed: int
    sigmas: Optional[Vector] = None

    def __post_init__(self) -> None:
        if self.N < 3:
            raise ValueError(f"a sensor ring needs N >= 3, got {self.N}")
        if self.eta.shape != (2, self.N + 1) or self.eta_bar.shape != (self.N,):
            raise DimensionError(f"scene arrays do not match N={self.N}")
        if not np.array_equal(self.eta[:, self.N], self.eta[:, 0]):
            raise ValueError("eta must wrap around: last column equals the first")

    def sensor_sigma(self, i: int) -> float:
        return float(self.sigma if self.sigmas is None else self.sigmas[i % self.N])

    def ground_truth(self) -> Matrix:
        """Noise-free circle positions, 2 x N."""
        return circle_positions(self.N)


def circle_positions(N: int) -> Matrix:
    """Sensor k (0-based) sits at angle 2(k+1)pi/N on the radius-N circle."""
    angles = 2.0 * np.pi * np.arange(1, N + 1) / N
    return np.vstack([N * np.cos(angles), N * np.sin(angles)])


def box_muller(rng: Generator, count: int) -> Vector:
    """Standard normals from pairs of uniforms (cosine branch only)."""
    u1 = 1.0 - rng.random(count)
    u2 = rng.random(count)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def quadratic_objective(H: Matrix, q: Vector, const: float = 0.0) -> ScalarField:
    """f(x) = 1/2 x^T H x + q^T x + const with analytic derivatives."""
    H = np.atleast_2d(np.asarray(H, dtype=float))
    H = 0.5 * (H + H.T)
    q = np.asarray(q, dtype=float).reshape(-1)
    if H.shape != (q.shape[0], q.shape[0]):
        raise DimensionError(f"H has shape {H.shape}, q has length {q.shape[0]}")
    return ScalarField(
        lambda x: 0.5 * float(x @ H @ x) + float(q @ x) + const,
        q.shape[0],
        grad=lambda x: H @ x + q,
        hess=lambda x: H,
    )


def linear_objective(q: Vector) -> ScalarField:
    """f(x) = q^T x."""
    q = np.asarray(q, dtype=float).reshape(-1)
    n = q.shape[0]
    return ScalarField(lambda x: float(q @ x), n, grad=lambda x: q.copy(), hess=lambda x: np.zeros((n, n)))


def gen_synthetic_dataset(M: int, n_x: int, seed: int = 0) -> LabeledDataset:
    """Two Gaussian clouds at +-1/sqrt(n_x) per coordinate, labeled by cloud, shuffled."""
    if M < 1 or n_x < 1:
        raise ValueError(f"M and n_x must be positive, got {M}, {n_x}")
    rng = Generator(PCG64(seed))
    labels = np.concatenate([np.ones(M - M // 2), -np.ones(M // 2)])
    center = np.ones(n_x) / math.sqrt(n_x)
    points = labels[:, None] * center[None, :] + DATA_SPREAD * rng.standard_normal((M, n_x))
    order = rng.permutation(M)
    return LabeledDataset(points=points[order], labels=labels[order], seed=seed)


def logistic_loss(data: LabeledDataset, w: Vector, gamma: float) -> float:
    """Centralized loss (1/M) sum_j log(1 + exp(-y_j x_j^T w)) + (gamma/2)||w||^2."""
    w = np.asarray(w, dtype=float).reshape(-1)
    margins = data.labels * (data.points @ w)
    return float(np.mean(np.logaddexp(0.0, -margins)) + 0.5 * gamma * float(w @ w))


def _logistic_block_objective(points: Matrix, labels: Vector, M: int, gamma: float) -> ScalarField:
    cap, n_x = points.shape
    dim = cap * n_x

    def omegas(w: Vector) -> Matrix:
        return np.asarray(w, dtype=float).reshape(cap, n_x)

    def fn(w: Vector) -> float:
        W = omegas(w)
        margins = labels * np.einsum("ij,ij->i", points, W)
        return float(np.sum(np.logaddexp(0.0, -margins)) / M + gamma / (2.0 * M) * float(W.ravel() @ W.ravel()))

    def grad(w: Vector) -> Vector:
        W = omegas(w)
        margins = labels * np.einsum("ij,ij->i", points, W)
        weights = -labels * expit(-margins) / M
        return (weights[:, None] * points + (gamma / M) * W).ravel()

    def hess(w: Vector) -> Matrix:
        W = omegas(w)
        margins = labels * np.einsum("ij,ij->i", points, W)
        s = expit(-margins)
        H = np.zeros((dim, dim))
        for j in range(cap):
            sl = slice(j * n_x, (j + 1) * n_x)
            H[sl, sl] = (s[j] * (1.0 - s[j]) / M) * np.outer(points[j], points[j])
        return H + (gamma / M) * np.eye(dim)

    return ScalarField(fn, dim, grad=grad, hess=hess)


def _copy_equalities(cap: int, n_x: int) -> Optional[VectorField]:
    """omega_1 - omega_j = 0 for j = 2..cap."""
    if cap < 2:
        return None
    rows = (cap - 1) * n_x
    J = np.zeros((rows, cap * n_x))
    for j in range(1, cap):
        J[(j - 1) * n_x : j * n_x, :n_x] = np.eye(n_x)
        J[(j - 1) * n_x : j * n_x, j * n_x : (j + 1) * n_x] = -np.eye(n_x)
    dim = cap * n_x
    return VectorField(
        lambda w: J @ w,
        dim,
        rows,
        jac=lambda w: J,
        weighted_hess=lambda w, y: np.zeros((dim, dim)),
    )


def partition_sizes(M: int, n_sub: int, strict: bool = True) -> list[int]:
    """Points per block; non-strict mode lets the last block be smaller."""
    if n_sub < 1 or n_sub > M:
        raise PartitionError(f"cannot split {M} points into {n_sub} blocks")
    if M % n_sub == 0:
        return [M // n_sub] * n_sub
    if strict:
        raise PartitionError(f"{M} points do not divide into {n_sub} equal blocks")
    cap = math.ceil(M / n_sub)
    last = M - cap * (n_sub - 1)
    if last < 1:
        raise PartitionError(f"{M} points leave no data for the last of {n_sub} blocks")
    return [cap] * (n_sub - 1) + [last]


def gen_logistic_consensus(
    data: LabeledDataset,
    n_sub: int,
    gamma: float,
    strict: bool = True,
) -> SeparableProblem:
    """Consensus logistic regression with one weight copy per data point.

    Block i holds cap points and a decision vector of cap * n_x entries (one
    omega_j per point). Local equalities force omega_1 = omega_j; the coupling
    matrices repeat an identity so that every block agrees with block 1.

    Args:
        data: Dataset.
        n_sub: Number of blocks.
        gamma: Regularization weight (>= 0).
        strict: Reject datasets that do not split evenly.

    Raises:
        PartitionError: On a non-divisible split in strict mode.
    """
    if gamma < 0:
        raise ValueError(f"gamma must be non-negative, got {gamma}")
    sizes = partition_sizes(data.M, n_sub, strict)
    objectives = []
    equalities = []
    start = 0
    for cap in sizes:
        rows = slice(start, start + cap)
        objectives.append(_logistic_block_objective(data.points[rows], data.labels[rows], data.M, gamma))
        equalities.append(_copy_equalities(cap, data.n_x))
        start += cap

    problem = build_consensus_problem(
        objectives,
        equalities=equalities,
        coupled_dim=data.n_x * min(sizes),
        name=f"logistic-{n_sub}",
    )
    logger.debug(f"Logistic consensus: M={data.M}, n_x={data.n_x}, blocks={sizes}")
    return problem


def gen_sensor_scene(
    N: int,
    sigma: float,
    seed: int = 0,
    sigmas: Optional[Sequence[float]] = None,
) -> SensorScene:
    """Noisy circle positions and inter-sensor distances.

    Noise is drawn per sensor in the order (x offset, y offset, distance).
    """
    if N < 3:
        raise ValueError(f"a sensor ring needs N >= 3, got {N}")
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    per_sensor = np.full(N, float(sigma)) if sigmas is None else np.asarray(sigmas, dtype=float)
    if per_sensor.shape != (N,) or np.any(per_sensor < 0):
        raise ValueError("sigmas must hold N non-negative values")

    noise = box_muller(Generator(PCG64(seed)), 3 * N).reshape(N, 3) * per_sensor[:, None]
    truth = circle_positions(N)
    eta = np.empty((2, N + 1))
    eta[:, :N] = truth + noise[:, :2].T
    eta[:, N] = eta[:, 0]
    eta_bar = 2.0 * N * math.sin(math.pi / N) + noise[:, 2]
    return SensorScene(
        N=N,
        sigma=float(sigma),
        eta=eta,
        eta_bar=eta_bar,
        seed=seed,
        sigmas=None if sigmas is None else per_sensor,
    )


def sensor_start_values(scene: SensorScene) -> list[Vector]:
    """z_i = (perturbed position i, perturbed position i+1), wrapping at N."""
    N = scene.N
    rng = Generator(PCG64(SeedSequence([scene.seed, 1])))
    scale = np.array([scene.sensor_sigma(i) for i in range(N)])
    noise = box_muller(rng, 2 * N).reshape(N, 2) * scale[:, None]
    positions = circle_positions(N) + noise.T
    return [np.concatenate([positions[:, i], positions[:, (i + 1) % N]]) for i in range(N)]


def _distance_terms(x: Vector) -> tuple[Vector, float]:
    d = x[:2] - x[2:]
    return d, float(np.linalg.norm(d))


def _distance_hessian(d: Vector, r: float, target: float) -> Matrix:
    """Hessian of (||d|| - target)^2 with respect to d."""
    if r < NORM_FLOOR:
        return 2.0 * np.eye(2)
    u = (r - target) / r
    dh = d / r
    return 2.0 * ((1.0 - u) * np.outer(dh, dh) + u * np.eye(2))


_P = np.hstack([np.eye(2), -np.eye(2)])


def _sensor_objective(eta_i: Vector, eta_next: Vector, eta_bar: float, sigma_i: float, sigma_next: float) -> ScalarField:
    c_own = 1.0 / (4.0 * sigma_i**2)
    c_next = 1.0 / (4.0 * sigma_next**2)
    c_dist = 1.0 / (2.0 * sigma_next**2)

    def fn(x: Vector) -> float:
        _, r = _distance_terms(x)
        return (
            c_own * float(np.sum((x[:2] - eta_i) ** 2))
            + c_next * float(np.sum((x[2:] - eta_next) ** 2))
            + c_dist * (r - eta_bar) ** 2
        )

    def grad(x: Vector) -> Vector:
        d, r = _distance_terms(x)
        g = np.concatenate([2.0 * c_own * (x[:2] - eta_i), 2.0 * c_next * (x[2:] - eta_next)])
        if r >= NORM_FLOOR:
            g = g + c_dist * _P.T @ (2.0 * (r - eta_bar) * d / r)
        return g

    def hess(x: Vector) -> Matrix:
        d, r = _distance_terms(x)
        H = np.diag([2.0 * c_own] * 2 + [2.0 * c_next] * 2)
        return H + c_dist * _P.T @ _distance_hessian(d, r, eta_bar) @ _P

    return ScalarField(fn, 4, grad=grad, hess=hess)


def _sensor_inequality(eta_bar: float, slack: float) -> VectorField:
    """h(x) = (||X - zeta|| - eta_bar)^2 - slack <= 0."""

    def fn(x: Vector) -> Vector:
        _, r = _distance_terms(x)
        return np.array([(r - eta_bar) ** 2 - slack])

    def jac(x: Vector) -> Matrix:
        d, r = _distance_terms(x)
        if r < NORM_FLOOR:
            return np.zeros((1, 4))
        return (_P.T @ (2.0 * (r - eta_bar) * d / r)).reshape(1, 4)

    def weighted_hess(x: Vector, w: Vector) -> Matrix:
        d, r = _distance_terms(x)
        return float(w[0]) * _P.T @ _distance_hessian(d, r, eta_bar) @ _P

    return VectorField(fn, 4, 1, jac=jac, weighted_hess=weighted_hess)


def sensor_coupling_matrix(N: int, i: int) -> Matrix:
    """2N x 4 coupling matrix of block i (0-based).

    Row block i holds +zeta_i; row block i-1 (cyclically) holds -X_i, so the
    coupling reads zeta_k = X_{k+1}.
    """
    A = np.zeros((2 * N, 4))
    A[2 * i : 2 * i + 2, 2:4] = np.eye(2)
    prev = (i - 1) % N
    A[2 * prev : 2 * prev + 2, 0:2] = -np.eye(2)
    return A


def gen_sensor_problem(
    scene: SensorScene,
    slack: Optional[float] = None,
    start: Optional[Sequence[Vector]] = None,
) -> SeparableProblem:
    """Sensor localization as a block-separable problem.

    Block i decides x_i = (X_i, zeta_i), its own position and its estimate of
    sensor i+1. A zero noise level falls back to unit weights.

    Args:
        scene: Measurements.
        slack: Inequality slack sigma_bar^2 (default 2 sigma^2 per sensor).
        start: Per-block start points (default sensor_start_values).
    """
    N = scene.N
    blocks = []
    for i in range(N):
        sigma_i = scene.sensor_sigma(i) or 1.0
        sigma_next = scene.sensor_sigma(i + 1) or 1.0
        bound = 2.0 * sigma_i**2 if slack is None else slack
        blocks.append(
            LocalBlock(
                f=_sensor_objective(scene.eta[:, i], scene.eta[:, i + 1], float(scene.eta_bar[i]), sigma_i, sigma_next),
                A=sensor_coupling_matrix(N, i),
                h=_sensor_inequality(float(scene.eta_bar[i]), bound),
                name=f"sensor-{i}",
            )
        )
    z0 = sensor_start_values(scene) if start is None else start
    return build_problem(blocks, np.zeros(2 * N), z0=z0, name=f"sensors-{N}")


def gen_consensus_quadratic(
    centers: Sequence[float],
    weights: Optional[Sequence[float]] = None,
) -> SeparableProblem:
    """Scalar blocks f_i(x) = a_i (x - c_i)^2 in consensus form.

    The consensus value is the weighted mean sum a_i c_i / sum a_i.
    """
    centers = [float(c) for c in centers]
    weights = [1.0] * len(centers) if weights is None else [float(a) for a in weights]
    if len(weights) != len(centers) or any(a <= 0 for a in weights):
        raise ValueError("weights must be positive and match the centers")
    objectives = [
        quadratic_objective([[2.0 * a]], [-2.0 * a * c], a * c * c) for a, c in zip(weights, centers)
    ]
    return build_consensus_problem(objectives, name="consensus-quadratic")


def gen_linear_coupled(n_blocks: int = 2, b: float = 2.0) -> SeparableProblem:
    """f_i(x_i) = x_i with sum_i x_i = b; convex but not strictly convex."""
    blocks = [LocalBlock(f=linear_objective([1.0]), A=np.ones((1, 1)), name=f"linear-{i}") for i in range(n_blocks)]
    return build_problem(blocks, [b], name="linear-coupled")


def gen_random_quadratic(
    seed: int,
    n_blocks: int = 3,
    max_dim: int = 4,
    m_c: int = 2,
) -> SeparableProblem:
    """Random strictly convex coupled quadratic.

    Block Hessians have eigenvalues in [1, 2]; the stacked coupling matrix has
    orthonormal rows so that A H^-1 A^T has eigenvalues in [1/2, 1].
    """
    rng = Generator(PCG64(seed))
    dims = [int(d) for d in rng.integers(1, max_dim + 1, size=n_blocks)]
    total = sum(dims)
    if m_c > total:
        raise DimensionError(f"{m_c} coupling rows exceed total dimension {total}")
    Q, _ = np.linalg.qr(rng.standard_normal((total, m_c)))
    A = Q.T
    b = rng.standard_normal(m_c)

    blocks = []
    offset = 0
    for i, n in enumerate(dims):
        V, _ = np.linalg.qr(rng.standard_normal((n, n)))
        H = (V * rng.uniform(1.0, 2.0, size=n)) @ V.T
        q = rng.standard_normal(n)
        blocks.append(LocalBlock(f=quadratic_objective(H, q), A=A[:, offset : offset + n], name=f"quad-{i}"))
        offset += n
    return build_problem(blocks, b, name=f"random-quadratic-{seed}")
