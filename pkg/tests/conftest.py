"""Pytest configuration and fixtures for distopt tests."""

import os
import tempfile
from pathlib import Path
from unittest.mock import patch

import numpy as np
import pytest
from scipy.linalg import block_diag

from config.settings import refresh_settings
from core.benchmarks import gen_random_quadratic
from core.problem import SeparableProblem


@pytest.fixture(autouse=True)
def reset_settings():
    """Reset settings cache before each test."""
    refresh_settings()
    yield
    refresh_settings()


@pytest.fixture
def temp_dir():
    """Provide a temporary directory for file tests."""
    with tempfile.TemporaryDirectory() as tmpdir:
        yield Path(tmpdir)


@pytest.fixture
def isolated_env(temp_dir):
    """Point artifact and history paths at a temp directory."""
    env_vars = {
        "DISTOPT_OUTPUT_DIR": str(temp_dir / "runs"),
        "DISTOPT_HISTORY": str(temp_dir / "history.json"),
        "DISTOPT_EXECUTION": "sequential",
        "DISTOPT_WORKERS": "",
    }
    with patch.dict(os.environ, env_vars, clear=False):
        refresh_settings()
        yield temp_dir


@pytest.fixture
def rng():
    """Seeded generator for test data."""
    return np.random.default_rng(20240611)


@pytest.fixture
def random_quadratic():
    """Factory for random strictly convex coupled quadratics."""

    def make(seed: int, n_blocks: int = 3, max_dim: int = 4, m_c: int = 2) -> SeparableProblem:
        return gen_random_quadratic(seed, n_blocks=n_blocks, max_dim=max_dim, m_c=m_c)

    return make


def stacked_kkt_solution(problem: SeparableProblem) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form (x*, lambda*) of a coupled quadratic without local constraints.

    Solves H x + q + A^T lambda = 0, A x = b with the coupling sign f + lambda^T (Ax - b).
    """
    zeros = [np.zeros(block.n) for block in problem.blocks]
    H = block_diag(*[block.f.hessian(z) for block, z in zip(problem.blocks, zeros)])
    q = np.concatenate([block.f.gradient(z) for block, z in zip(problem.blocks, zeros)])
    A = problem.stacked_coupling()
    n, m = H.shape[0], A.shape[0]
    K = np.block([[H, A.T], [A, np.zeros((m, m))]])
    solution = np.linalg.solve(K, np.concatenate([-q, problem.b]))
    return solution[:n], solution[n:]


@pytest.fixture
def kkt_oracle():
    """Stacked-KKT oracle for coupled quadratics."""
    return stacked_kkt_solution
