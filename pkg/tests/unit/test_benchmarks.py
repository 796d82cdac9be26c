"""Tests for core/benchmarks.py."""

import math

import numpy as np
import pytest
from numpy.random import PCG64, Generator

from core.benchmarks import (
    LabeledDataset,
    box_muller,
    circle_positions,
    gen_consensus_quadratic,
    gen_linear_coupled,
    gen_logistic_consensus,
    gen_random_quadratic,
    gen_sensor_problem,
    gen_sensor_scene,
    gen_synthetic_dataset,
    logistic_loss,
    partition_sizes,
    sensor_coupling_matrix,
    sensor_start_values,
)
from core.calculus import fd_gradient
from core.errors import DimensionError, PartitionError
from core.problem import coupling_residual, total_objective


class TestDatasets:
    """Tests for synthetic data and the logistic loss."""

    def test_synthetic_shape_and_balance(self):
        """Test M points in n_x dimensions with balanced labels."""
        data = gen_synthetic_dataset(100, 2, seed=0)
        assert data.points.shape == (100, 2)
        assert data.M == 100
        assert data.n_x == 2
        assert int(np.sum(data.labels == 1.0)) == 50

    def test_synthetic_deterministic(self):
        """Test the same seed gives the same data."""
        a = gen_synthetic_dataset(40, 3, seed=7)
        b = gen_synthetic_dataset(40, 3, seed=7)
        np.testing.assert_array_equal(a.points, b.points)
        np.testing.assert_array_equal(a.labels, b.labels)
        assert not np.array_equal(a.points, gen_synthetic_dataset(40, 3, seed=8).points)

    def test_clouds_separate_by_label(self):
        """Test class means sit on opposite sides of the origin."""
        data = gen_synthetic_dataset(400, 2, seed=1)
        pos = data.points[data.labels == 1.0].mean(axis=0)
        neg = data.points[data.labels == -1.0].mean(axis=0)
        assert np.all(pos > 0.4)
        assert np.all(neg < -0.4)

    def test_invalid_labels(self):
        """Test labels other than +-1 raise."""
        with pytest.raises(ValueError):
            LabeledDataset(points=np.zeros((2, 1)), labels=np.array([1.0, 0.0]))

    def test_length_mismatch(self):
        """Test points and labels must have equal counts."""
        with pytest.raises(DimensionError):
            LabeledDataset(points=np.zeros((3, 1)), labels=np.array([1.0, -1.0]))

    def test_logistic_loss_at_zero(self):
        """Test the loss at w = 0 is log 2."""
        data = gen_synthetic_dataset(10, 2, seed=0)
        assert logistic_loss(data, np.zeros(2), 0.1) == pytest.approx(math.log(2.0))


class TestPartition:
    """Tests for partition_sizes."""

    def test_even_split(self):
        """Test M = 100 over 10 blocks."""
        assert partition_sizes(100, 10) == [10] * 10

    def test_strict_rejects_remainder(self):
        """Test a non-divisible split raises in strict mode."""
        with pytest.raises(PartitionError):
            partition_sizes(10, 3)

    def test_relaxed_shorter_last_block(self):
        """Test relaxed mode puts the remainder in the last block."""
        assert partition_sizes(10, 3, strict=False) == [4, 4, 2]

    def test_too_many_blocks(self):
        """Test more blocks than points raises."""
        with pytest.raises(PartitionError):
            partition_sizes(5, 6)


class TestLogisticConsensus:
    """Tests for gen_logistic_consensus."""

    def test_structure(self):
        """Test block count, dimensions and local equalities."""
        data = gen_synthetic_dataset(100, 2, seed=0)
        problem = gen_logistic_consensus(data, 10, 0.1)
        assert problem.n_blocks == 10
        assert problem.consensus
        assert all(block.n == 20 for block in problem.blocks)
        assert all(block.equality_count == 18 for block in problem.blocks)
        assert problem.m_c == 20 * 9

    def test_objective_matches_centralized_loss(self):
        """Test agreeing copies reproduce the centralized loss."""
        data = gen_synthetic_dataset(60, 2, seed=3)
        problem = gen_logistic_consensus(data, 6, 0.1)
        w = np.array([0.3, -0.7])
        xs = [np.tile(w, block.n // 2) for block in problem.blocks]
        assert total_objective(problem, xs) == pytest.approx(logistic_loss(data, w, 0.1), rel=1e-12)
        np.testing.assert_allclose(coupling_residual(problem, xs), 0.0)

    def test_analytic_gradient(self):
        """Test the block gradient against finite differences."""
        data = gen_synthetic_dataset(20, 2, seed=2)
        block = gen_logistic_consensus(data, 4, 0.5).blocks[0]
        x = np.linspace(-1.0, 1.0, block.n)
        np.testing.assert_allclose(block.f.gradient(x), fd_gradient(block.f, x), atol=1e-8)

    def test_negative_gamma(self):
        """Test gamma < 0 raises."""
        with pytest.raises(ValueError):
            gen_logistic_consensus(gen_synthetic_dataset(10, 2), 2, -1.0)


class TestSensorScene:
    """Tests for the sensor scene and problem."""

    def test_circle_positions(self):
        """Test sensor k sits at angle 2(k+1)pi/N on radius N."""
        P = circle_positions(4)
        np.testing.assert_allclose(P[:, 0], [0.0, 4.0], atol=1e-12)
        np.testing.assert_allclose(P[:, 3], [4.0, 0.0], atol=1e-12)
        np.testing.assert_allclose(np.linalg.norm(P, axis=0), 4.0)

    def test_noise_free_scene(self):
        """Test sigma = 0 reproduces the circle and chord lengths."""
        scene = gen_sensor_scene(6, 0.0, seed=1)
        np.testing.assert_allclose(scene.eta[:, :6], circle_positions(6))
        np.testing.assert_array_equal(scene.eta[:, 6], scene.eta[:, 0])
        np.testing.assert_allclose(scene.eta_bar, 2.0 * 6 * math.sin(math.pi / 6))

    def test_scene_deterministic(self):
        """Test the same seed gives the same measurements."""
        a = gen_sensor_scene(5, 0.5, seed=11)
        b = gen_sensor_scene(5, 0.5, seed=11)
        np.testing.assert_array_equal(a.eta, b.eta)
        np.testing.assert_array_equal(a.eta_bar, b.eta_bar)

    def test_too_few_sensors(self):
        """Test N < 3 raises."""
        with pytest.raises(ValueError):
            gen_sensor_scene(2, 0.5)

    def test_box_muller_moments(self):
        """Test the samples are roughly standard normal."""
        z = box_muller(Generator(PCG64(0)), 20000)
        assert abs(float(z.mean())) < 0.05
        assert abs(float(z.std()) - 1.0) < 0.05

    def test_coupling_matrix_layout(self):
        """Test +zeta_i in row block i and -X_i in row block i-1."""
        A = sensor_coupling_matrix(3, 0)
        assert A.shape == (6, 4)
        np.testing.assert_array_equal(A[0:2, 2:4], np.eye(2))
        np.testing.assert_array_equal(A[4:6, 0:2], -np.eye(2))
        assert np.count_nonzero(A) == 4

    def test_true_positions_satisfy_coupling(self):
        """Test x_i = (X_i, X_{i+1}) makes the coupling residual vanish."""
        N = 5
        problem = gen_sensor_problem(gen_sensor_scene(N, 0.5, seed=0))
        P = circle_positions(N)
        xs = [np.concatenate([P[:, i], P[:, (i + 1) % N]]) for i in range(N)]
        np.testing.assert_allclose(coupling_residual(problem, xs), 0.0, atol=1e-12)

    def test_coupling_residual_matches_estimate_mismatch(self):
        """Test the residual vanishes exactly when every zeta_i equals X_{i+1}."""
        N = 6
        problem = gen_sensor_problem(gen_sensor_scene(N, 0.5, seed=2))
        rng = np.random.default_rng(11)
        for _ in range(20):
            positions = rng.uniform(-3.0, 3.0, size=(N, 2))
            feasible = [np.concatenate([positions[i], positions[(i + 1) % N]]) for i in range(N)]
            np.testing.assert_allclose(coupling_residual(problem, feasible), 0.0, atol=1e-12)

            broken = int(rng.integers(N))
            offset = rng.uniform(0.1, 1.0, size=2) * rng.choice([-1.0, 1.0], size=2)
            infeasible = [x.copy() for x in feasible]
            infeasible[broken][2:] += offset
            r = coupling_residual(problem, infeasible)
            np.testing.assert_allclose(r[2 * broken : 2 * broken + 2], offset, atol=1e-12)
            assert float(np.linalg.norm(r)) > 0.1

    def test_random_points_off_coupling(self):
        """Test random block points with zeta_i != X_{i+1} leave a residual."""
        N = 5
        problem = gen_sensor_problem(gen_sensor_scene(N, 0.5, seed=0))
        rng = np.random.default_rng(3)
        for _ in range(20):
            xs = [rng.uniform(-2.0, 2.0, size=4) for _ in range(N)]
            mismatch = max(float(np.linalg.norm(xs[i][2:] - xs[(i + 1) % N][:2])) for i in range(N))
            assert mismatch > 0.0
            assert float(np.linalg.norm(coupling_residual(problem, xs))) > 0.0

    def test_problem_shape(self):
        """Test N four-dimensional blocks with one inequality each."""
        problem = gen_sensor_problem(gen_sensor_scene(7, 1.0, seed=0))
        assert problem.name == "sensors-7"
        assert problem.n_blocks == 7
        assert problem.m_c == 14
        assert all(block.n == 4 and block.inequality_count == 1 for block in problem.blocks)

    def test_start_values_wrap(self):
        """Test block i's estimate of sensor i+1 starts at block i+1's position."""
        starts = sensor_start_values(gen_sensor_scene(5, 0.5, seed=4))
        assert len(starts) == 5
        for i in range(5):
            np.testing.assert_array_equal(starts[i][2:], starts[(i + 1) % 5][:2])

    def test_zero_noise_objective_finite(self):
        """Test sigma = 0 falls back to unit weights."""
        problem = gen_sensor_problem(gen_sensor_scene(4, 0.0, seed=0))
        assert all(np.isfinite(block.f(np.ones(4))) for block in problem.blocks)

    def test_sensor_gradient(self):
        """Test the analytic gradient against finite differences."""
        block = gen_sensor_problem(gen_sensor_scene(5, 0.5, seed=2)).blocks[1]
        x = np.array([1.0, 2.0, -0.5, 3.0])
        np.testing.assert_allclose(block.f.gradient(x), fd_gradient(block.f, x), rtol=1e-6, atol=1e-6)


class TestAnalyticProblems:
    """Tests for the small analytic generators."""

    def test_consensus_quadratic(self):
        """Test the weighted mean minimizes the agreed objective."""
        problem = gen_consensus_quadratic([1.0, 4.0], [1.0, 2.0])
        values = [total_objective(problem, [np.array([v])] * 2) for v in (2.9, 3.0, 3.1)]
        assert values[1] < values[0]
        assert values[1] < values[2]

    def test_consensus_quadratic_weights_checked(self):
        """Test non-positive weights raise."""
        with pytest.raises(ValueError):
            gen_consensus_quadratic([1.0, 2.0], [1.0, 0.0])

    def test_linear_coupled(self):
        """Test the linear problem's shape."""
        problem = gen_linear_coupled(3, 1.5)
        assert problem.n_blocks == 3
        np.testing.assert_array_equal(problem.b, [1.5])

    def test_random_quadratic_conditioning(self):
        """Test A H^-1 A^T has eigenvalues in [1/2, 1]."""
        problem = gen_random_quadratic(3)
        A = problem.stacked_coupling()
        H_inv = np.zeros((problem.total_dim, problem.total_dim))
        for block, lo, hi in zip(problem.blocks, problem.offsets, problem.offsets[1:]):
            H_inv[lo:hi, lo:hi] = np.linalg.inv(block.f.hessian(np.zeros(block.n)))
        eig = np.linalg.eigvalsh(A @ H_inv @ A.T)
        assert eig.min() >= 0.5 - 1e-12
        assert eig.max() <= 1.0 + 1e-12

    def test_random_quadratic_too_many_rows(self):
        """Test m_c above the total dimension raises."""
        with pytest.raises(DimensionError):
            gen_random_quadratic(0, n_blocks=1, max_dim=1, m_c=2)
