"""Tests for core/manifest.py."""

import json

import numpy as np
import pytest
from pydantic import ValidationError

from config.settings import SolveStatus
from core.aladin import AladinConfig
from core.errors import ManifestError, UnsupportedProblemError
from core.first_order import SolverConfig
from core.manifest import (
    BenchmarkName,
    BenchmarkParams,
    ObjectiveSpec,
    ProblemManifest,
    RunManifest,
    SolverName,
    build_benchmark,
    make_config,
    run_solver,
    solver_config_type,
)
from core.sqp import SqpConfig


TWO_BLOCKS = {
    "name": "two-blocks",
    "b": [2.0],
    "blocks": [
        {"objective": {"kind": "quadratic", "H": [[1.0]], "q": [0.0]}, "A": [[1.0]], "start": [0.5]},
        {
            "objective": {"kind": "quadratic", "H": [[1.0]], "q": [0.0]},
            "A": [[1.0]],
            "lb": [-5.0],
            "ub": [None],
        },
    ],
}


class TestProblemManifest:
    """Tests for ProblemManifest."""

    def test_build(self):
        """Test blocks, bounds and start points are built."""
        problem = ProblemManifest.model_validate(TWO_BLOCKS).build()
        assert problem.name == "two-blocks"
        assert problem.n_blocks == 2
        np.testing.assert_array_equal(problem.blocks[1].lb, [-5.0])
        assert problem.blocks[1].inequality_count == 1
        np.testing.assert_array_equal(problem.start()[0], [0.5])
        np.testing.assert_array_equal(problem.start()[1], [0.0])

    def test_linear_objective_with_constant(self):
        """Test a linear objective keeps its constant."""
        f = ObjectiveSpec(kind="linear", q=[1.0, 2.0], const=3.0).build()
        assert f(np.array([1.0, 1.0])) == pytest.approx(6.0)
        np.testing.assert_array_equal(f.gradient(np.zeros(2)), [1.0, 2.0])

    def test_quadratic_needs_h(self):
        """Test a quadratic objective without H is rejected."""
        with pytest.raises(ValidationError):
            ObjectiveSpec(kind="quadratic", q=[1.0])

    def test_linear_constraints(self):
        """Test equality rows read G x - rhs."""
        data = json.loads(json.dumps(TWO_BLOCKS))
        data["blocks"][0]["objective"] = {"kind": "quadratic", "H": np.eye(2).tolist(), "q": [0.0, 0.0]}
        data["blocks"][0]["A"] = [[1.0, 0.0]]
        data["blocks"][0]["start"] = None
        data["blocks"][0]["equality"] = {"matrix": [[1.0, -1.0]], "rhs": [0.0]}
        block = ProblemManifest.model_validate(data).build().blocks[0]
        np.testing.assert_array_equal(block.equalities(np.array([3.0, 1.0])), [2.0])

    def test_load_errors(self, temp_dir):
        """Test missing and malformed files raise ManifestError."""
        with pytest.raises(ManifestError):
            ProblemManifest.load(temp_dir / "missing.json")
        bad = temp_dir / "bad.json"
        bad.write_text("{not json", encoding="utf-8")
        with pytest.raises(ManifestError):
            ProblemManifest.load(bad)
        unknown = temp_dir / "unknown.json"
        unknown.write_text(json.dumps({**TWO_BLOCKS, "extra": 1}), encoding="utf-8")
        with pytest.raises(ManifestError):
            ProblemManifest.load(unknown)


class TestRunManifest:
    """Tests for RunManifest."""

    def test_exactly_one_source(self, temp_dir):
        """Test a run needs a benchmark or a problem file, not both."""
        with pytest.raises(ValidationError):
            RunManifest(solver=SolverName.MOM)
        path = temp_dir / "problem.json"
        path.write_text(json.dumps(TWO_BLOCKS), encoding="utf-8")
        with pytest.raises(ValidationError):
            RunManifest(benchmark=BenchmarkName.LOGISTIC, problem_file=path, solver=SolverName.MOM)

    def test_problem_file_must_exist(self, temp_dir):
        """Test a missing problem file is rejected."""
        with pytest.raises(ValidationError):
            RunManifest(problem_file=temp_dir / "nope.json", solver=SolverName.MOM)

    def test_load_and_build(self, temp_dir):
        """Test a manifest file round trip to a problem and config."""
        path = temp_dir / "run.json"
        path.write_text(
            json.dumps({
                "benchmark": "consensus-quadratic",
                "params": {"centers": [1.0, 5.0]},
                "solver": "consensus-admm",
                "overrides": {"rho": 2.0},
            }),
            encoding="utf-8",
        )
        manifest = RunManifest.load(path)
        assert manifest.solver == SolverName.CONSENSUS_ADMM
        assert manifest.build_problem().n_blocks == 2
        assert manifest.solver_config().rho == 2.0

    def test_problem_file_source(self, temp_dir):
        """Test the problem file is used when given."""
        path = temp_dir / "problem.json"
        path.write_text(json.dumps(TWO_BLOCKS), encoding="utf-8")
        manifest = RunManifest(problem_file=path, solver=SolverName.MOM)
        assert manifest.build_problem().name == "two-blocks"

    def test_unknown_solver(self, temp_dir):
        """Test an unknown solver name fails to load."""
        path = temp_dir / "run.json"
        path.write_text(json.dumps({"benchmark": "logistic", "solver": "bogus"}), encoding="utf-8")
        with pytest.raises(ManifestError):
            RunManifest.load(path)


class TestMakeConfig:
    """Tests for make_config."""

    def test_config_types(self):
        """Test each solver maps to its configuration model."""
        assert solver_config_type(SolverName.ALADIN) is AladinConfig
        assert solver_config_type(SolverName.CENTRALIZED) is SqpConfig
        assert solver_config_type(SolverName.MOM) is SolverConfig

    def test_overrides_applied(self):
        """Test overrides reach the model, execution included."""
        cfg = make_config(SolverName.ALADIN, {"rho": 10.0, "execution": {"kind": "concurrent", "worker_count": 2}})
        assert cfg.rho == 10.0
        assert cfg.execution.worker_count == 2

    def test_unknown_key(self):
        """Test unknown options raise ManifestError."""
        with pytest.raises(ManifestError):
            make_config(SolverName.MOM, {"nu": 1.0})

    def test_invalid_value(self):
        """Test invalid values raise ManifestError."""
        with pytest.raises(ManifestError):
            make_config(SolverName.MOM, {"max_iter": 0})


class TestBuildBenchmark:
    """Tests for build_benchmark."""

    @pytest.mark.parametrize(
        "name,expected",
        [
            (BenchmarkName.CONSENSUS_QUADRATIC, "consensus-quadratic"),
            (BenchmarkName.LOGISTIC, "logistic-10"),
            (BenchmarkName.SENSOR, "sensors-5"),
            (BenchmarkName.LINEAR_COUPLED, "linear-coupled"),
            (BenchmarkName.RANDOM_QUADRATIC, "random-quadratic-0"),
        ],
    )
    def test_names(self, name, expected):
        """Test each benchmark builds with default parameters."""
        assert build_benchmark(name, BenchmarkParams()).name == expected

    def test_logistic_from_dataset(self, temp_dir):
        """Test the logistic benchmark reads an imported dataset."""
        path = temp_dir / "data.csv"
        path.write_text("x1,x2,y\n1,0,1\n0,1,-1\n2,1,1\n-1,-2,-1\n", encoding="utf-8")
        problem = build_benchmark(BenchmarkName.LOGISTIC, BenchmarkParams(dataset=path, n_sub=2))
        assert problem.n_blocks == 2
        assert problem.blocks[0].n == 4


class TestRunSolver:
    """Tests for run_solver dispatch."""

    def test_admm_on_two_blocks(self):
        """Test two-block ADMM reaches the consensus mean."""
        problem = build_benchmark(BenchmarkName.CONSENSUS_QUADRATIC, BenchmarkParams())
        result = run_solver(SolverName.ADMM, problem)
        assert result.converged
        np.testing.assert_allclose(result.stacked_x(), [2.0, 2.0], atol=1e-6)

    def test_admm_needs_two_blocks(self):
        """Test three blocks are rejected."""
        problem = build_benchmark(BenchmarkName.CONSENSUS_QUADRATIC, BenchmarkParams(centers=[1.0, 2.0, 3.0]))
        with pytest.raises(UnsupportedProblemError):
            run_solver(SolverName.ADMM, problem)

    def test_centralized_matches_oracle(self, random_quadratic, kkt_oracle):
        """Test the stacked SQP reference reproduces the KKT point."""
        problem = random_quadratic(6)
        x_star, lam_star = kkt_oracle(problem)
        result = run_solver(SolverName.CENTRALIZED, problem)
        assert result.status == SolveStatus.CONVERGED
        np.testing.assert_allclose(result.stacked_x(), x_star, atol=1e-8)
        np.testing.assert_allclose(result.state.lam, lam_star, atol=1e-8)
        assert len(result.trace) == result.iterations
