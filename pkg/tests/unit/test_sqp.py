"""Tests for core/sqp.py."""

import numpy as np
import pytest

from config.settings import SolveStatus
from core.benchmarks import linear_objective, quadratic_objective
from core.calculus import ScalarField, VectorField
from core.errors import DimensionError
from core.problem import LocalBlock, build_problem
from core.sqp import (
    ActiveSet,
    SqpConfig,
    SqpProblem,
    StepForm,
    detect_active_set,
    kkt_residual,
    sqp_solve,
    sqp_step,
    tangent_curvature,
)


def circle_problem() -> SqpProblem:
    """min x0 + x1 s.t. x0^2 + x1^2 = 2; optimum (-1, -1) with lambda = -1/2."""
    c = VectorField(
        lambda x: np.array([x @ x - 2.0]),
        2,
        1,
        jac=lambda x: 2.0 * x.reshape(1, 2),
        weighted_hess=lambda x, w: 2.0 * float(w[0]) * np.eye(2),
    )
    return SqpProblem(linear_objective([1.0, 1.0]), c)


def linear_constraint(A, b) -> VectorField:
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    return VectorField(
        lambda x: A @ x - b,
        A.shape[1],
        A.shape[0],
        jac=lambda x: A,
        weighted_hess=lambda x, w: np.zeros((A.shape[1], A.shape[1])),
    )


class TestSqpProblem:
    """Tests for SqpProblem construction."""

    def test_too_many_constraints(self):
        """Test m > n raises."""
        with pytest.raises(DimensionError):
            SqpProblem(linear_objective([1.0]), linear_constraint(np.eye(2, 1), [0.0, 0.0]))

    def test_input_dimension_checked(self):
        """Test c must accept x of dimension n."""
        with pytest.raises(DimensionError):
            SqpProblem(linear_objective([1.0, 1.0]), linear_constraint([[1.0]], [0.0]))

    def test_kkt_residual_shape(self):
        """Test F stacks stationarity and feasibility."""
        F = kkt_residual(circle_problem(), np.array([1.0, 1.0]), np.array([0.5]))
        np.testing.assert_allclose(F, [0.0, 0.0, 0.0])

    def test_kkt_residual_rejects_bad_lengths(self):
        """Test mismatched x or lambda raise."""
        with pytest.raises(DimensionError):
            kkt_residual(circle_problem(), np.zeros(3), np.zeros(1))


class TestSqpSolve:
    """Tests for sqp_solve."""

    def test_quadratic_linear_one_step(self):
        """Test a quadratic objective with linear constraints converges in one step."""
        prob = SqpProblem(
            quadratic_objective(np.diag([1.0, 2.0, 3.0]), [1.0, -1.0, 0.5]),
            linear_constraint([[1.0, 1.0, 1.0]], [1.0]),
        )
        res = sqp_solve(prob, np.array([5.0, -3.0, 2.0]))
        assert res.converged
        assert res.iterations == 1
        assert len(res.trace) == 2
        assert res.residual <= 1e-10

    def test_circle_converges(self):
        """Test the circle problem reaches (-1, -1) with lambda = -1/2."""
        res = sqp_solve(circle_problem(), np.array([-1.2, -0.8]))
        assert res.converged
        np.testing.assert_allclose(res.x, [-1.0, -1.0], atol=1e-10)
        np.testing.assert_allclose(res.lam, [-0.5], atol=1e-10)
        assert res.iterations <= 8

    def test_circle_quadratic_rate(self):
        """Test the error roughly squares once the iterates are close."""
        res = sqp_solve(circle_problem(), np.array([-1.1, -0.9]), lam0=np.array([-0.45]))
        target = np.array([-1.0, -1.0, -0.5])
        errors = [float(np.linalg.norm(np.concatenate([x, lam]) - target)) for x, lam in res.iterates]
        checked = 0
        for e_k, e_next in zip(errors, errors[1:]):
            if e_k < 0.1 and e_next > 1e-12:
                assert e_next <= 10.0 * e_k**2
                checked += 1
        assert checked >= 1

    def test_unconstrained_newton(self):
        """Test m = 0 reduces to Newton's method."""
        prob = SqpProblem(quadratic_objective(np.diag([2.0, 4.0]), [-2.0, -4.0]))
        res = sqp_solve(prob, np.zeros(2))
        assert res.converged
        np.testing.assert_allclose(res.x, [1.0, 1.0], atol=1e-12)
        assert res.lam.shape == (0,)

    def test_budget_exhausted(self):
        """Test a one-step budget from far away ends at max-iter."""
        res = sqp_solve(circle_problem(), np.array([-3.0, 0.5]), cfg=SqpConfig(max_iter=1))
        assert res.status == SolveStatus.MAX_ITER
        assert res.iterations == 1
        assert len(res.iterates) == 2

    def test_start_at_solution(self):
        """Test an exact KKT point returns after zero steps."""
        res = sqp_solve(circle_problem(), np.array([-1.0, -1.0]), lam0=np.array([-0.5]))
        assert res.converged
        assert res.iterations == 0

    @pytest.mark.parametrize("curvature", [1e5, 1e6])
    @pytest.mark.parametrize("target", [1e4 + 0.25, 1e4 + 0.5, 1e4 + 1.0])
    def test_roundoff_floor_is_not_converged(self, curvature, target):
        """Test a residual stuck above tol is never reported as converged."""
        f = ScalarField(
            lambda x: curvature * float((x[0] - target) ** 2),
            1,
            grad=lambda x: np.array([2.0 * curvature * (x[0] - target) + 1e-7 * np.sin(x[0])]),
            hess=lambda x: np.array([[2.0 * curvature]]),
        )
        cfg = SqpConfig()
        res = sqp_solve(SqpProblem(f), np.array([target + 0.37]), cfg=cfg)

        assert res.usable
        if res.converged:
            assert res.residual <= cfg.tol
        else:
            assert res.status == SolveStatus.MAX_ITER
            assert res.stalled
            assert res.residual > cfg.tol

    def test_converged_runs_meet_tolerance(self, random_quadratic):
        """Test every converged run ends with ||F|| <= tol."""
        cfg = SqpConfig()
        problems = [
            (circle_problem(), np.array([-1.2, -0.8])),
            (SqpProblem(quadratic_objective(np.diag([2.0, 4.0]), [-2.0, -4.0])), np.zeros(2)),
        ]
        for seed in range(5):
            problem = random_quadratic(seed)
            problems.append((SqpProblem.from_separable(problem), np.concatenate(problem.start())))

        for prob, x0 in problems:
            res = sqp_solve(prob, x0, cfg=cfg)
            assert res.converged
            assert res.residual <= cfg.tol
            assert float(np.linalg.norm(kkt_residual(prob, res.x, res.lam))) <= cfg.tol


class TestSqpStep:
    """Tests for sqp_step."""

    def test_step_forms_agree(self):
        """Test the Newton and QP forms give the same step and multipliers."""
        prob = circle_problem()
        x = np.array([-1.3, -0.7])
        lam = np.array([-0.4])
        p_newton, lam_newton = sqp_step(prob, x, lam, form=StepForm.NEWTON)
        p_qp, lam_qp = sqp_step(prob, x, lam, form=StepForm.QP)
        np.testing.assert_allclose(p_newton, p_qp, atol=1e-12)
        np.testing.assert_allclose(lam_newton, lam_qp, atol=1e-12)

    def test_tangent_curvature(self):
        """Test curvature restricted to the constraint null space."""
        H = np.diag([1.0, -1.0])
        assert tangent_curvature(H, np.array([[0.0, 1.0]])) == pytest.approx(1.0)
        assert tangent_curvature(H, np.zeros((0, 2))) == pytest.approx(-1.0)
        assert tangent_curvature(H, np.eye(2)) == float("inf")


class TestActiveSet:
    """Tests for ActiveSet and detect_active_set."""

    def test_sorted(self):
        """Test indices are stored sorted."""
        assert ActiveSet((3, 0, 2)).indices == (0, 2, 3)

    def test_duplicates_rejected(self):
        """Test duplicate indices raise."""
        with pytest.raises(ValueError):
            ActiveSet((1, 1))

    def test_validate_range(self):
        """Test an index past the row count raises."""
        with pytest.raises(DimensionError):
            ActiveSet((0, 2)).validate(2)

    def test_detect(self):
        """Test rows within eps_act of zero are active."""
        h = VectorField(lambda x: np.array([x[0] - 1.0, -x[1] - 5.0, x[1] - 1e-8]), 2, 3)
        active = detect_active_set(h, np.array([1.0, 0.0]), eps_act=1e-6)
        assert active.indices == (0, 2)
        assert 0 in active
        assert len(active) == 2

    def test_detect_without_inequalities(self):
        """Test a block without h has an empty active set."""
        assert len(detect_active_set(None, np.zeros(2))) == 0

    def test_negative_eps_rejected(self):
        """Test eps_act < 0 raises."""
        with pytest.raises(ValueError):
            detect_active_set(None, np.zeros(1), eps_act=-1.0)


class TestFromSeparable:
    """Tests for SqpProblem.from_separable."""

    def test_matches_kkt_oracle(self, random_quadratic, kkt_oracle):
        """Test the centralized solve reproduces the stacked KKT solution."""
        problem = random_quadratic(2)
        x_star, lam_star = kkt_oracle(problem)
        prob = SqpProblem.from_separable(problem)
        assert prob.m == problem.m_c
        res = sqp_solve(prob, np.zeros(problem.total_dim))
        assert res.converged
        np.testing.assert_allclose(res.x, x_star, atol=1e-8)
        np.testing.assert_allclose(-res.lam, lam_star, atol=1e-8)

    def test_active_bound_held_as_equality(self):
        """Test an active lower bound pins its component."""
        blocks = [
            LocalBlock(f=quadratic_objective([[2.0]], [2.0]), A=np.ones((1, 1)), lb=np.zeros(1)),
            LocalBlock(f=quadratic_objective([[2.0]], [2.0]), A=-np.ones((1, 1))),
        ]
        problem = build_problem(blocks, [0.0])
        prob = SqpProblem.from_separable(problem, [ActiveSet((0,)), ActiveSet()])
        assert prob.m == 2
        res = sqp_solve(prob, np.array([1.0, 1.0]))
        assert res.converged
        np.testing.assert_allclose(res.x, [0.0, 0.0], atol=1e-10)

    def test_active_index_out_of_range(self):
        """Test an active set beyond the block's inequality rows raises."""
        block = LocalBlock(f=quadratic_objective([[2.0]], [0.0]), A=np.ones((1, 1)))
        problem = build_problem([block], [0.0])
        with pytest.raises(DimensionError):
            SqpProblem.from_separable(problem, [ActiveSet((0,))])
