"""Application settings with environment variable loading.

Supports both local development (.env) and batch/cluster runs (environment
variables). Solver numerics live in per-solve config models; this module only
holds the ambient knobs shared by the library and the CLI.
"""

from enum import Enum
from functools import lru_cache
from typing import Optional

from dotenv import load_dotenv
from pydantic import ConfigDict, Field, field_validator
from pydantic_settings import BaseSettings


load_dotenv()


class ExecutionKind(str, Enum):
    """How per-block work is executed."""

    SEQUENTIAL = "sequential"
    CONCURRENT = "concurrent"


class HessianMode(str, Enum):
    """How ALADIN obtains the per-block Lagrangian Hessian."""

    EXACT_FD = "exact-fd"
    ANALYTIC = "analytic"
    REGULARIZED = "regularized"


class SolveStatus(str, Enum):
    """Terminal status of an iterative solve."""

    CONVERGED = "converged"
    MAX_ITER = "max-iter"
    DIVERGED = "diverged"
    OSCILLATING = "oscillating"


class Settings(BaseSettings):
    """Ambient configuration loaded from environment variables.

    Attributes:
        default_workers: Worker count for concurrent execution (None = CPU count).
        execution_kind: Default execution mode for block computations.
        output_dir: Directory for traces, tables and plot scripts.
        history_path: JSON file holding the CLI run history.
        log_level: Application logging level.
        log_file: Optional log file path (stderr only when unset).
        log_retention_days: Days to retain run history entries.
        divergence_radius: Iterate norm beyond which an inner solve is declared unbounded.
        oscillation_window: Iterations without residual decrease before oscillation is reported.
    """

    # Execution
    default_workers: Optional[int] = Field(default=None, ge=1, alias="DISTOPT_WORKERS")
    execution_kind: ExecutionKind = Field(
        default=ExecutionKind.SEQUENTIAL,
        alias="DISTOPT_EXECUTION",
    )

    # Artifacts
    output_dir: str = Field(default="runs", alias="DISTOPT_OUTPUT_DIR")
    history_path: str = Field(default="run_history.json", alias="DISTOPT_HISTORY")

    # Logging Configuration
    log_level: str = Field(default="INFO", alias="LOG_LEVEL")
    log_file: Optional[str] = Field(default=None, alias="DISTOPT_LOG_FILE")
    log_retention_days: int = Field(default=30, ge=1, le=365)

    # Numerical safeguards
    divergence_radius: float = Field(default=1e8, gt=0)
    oscillation_window: int = Field(default=20, ge=2)

    model_config = ConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
        populate_by_name=True,
    )

    @field_validator("log_level", mode="before")
    @classmethod
    def normalize_level(cls, v: str) -> str:
        """Upper-case the log level name."""
        return v.strip().upper() if v else "INFO"

    @field_validator("default_workers", "log_file", mode="before")
    @classmethod
    def empty_as_none(cls, v: object) -> object:
        """Treat empty environment values as unset."""
        if isinstance(v, str) and not v.strip():
            return None
        return v


@lru_cache
def get_settings() -> Settings:
    """Get cached settings instance.

    Returns:
        Settings instance with loaded configuration.
    """
    return Settings()


def refresh_settings() -> Settings:
    """Clear settings cache and reload.

    Useful for testing or when environment changes.

    Returns:
        Fresh Settings instance.
    """
    get_settings.cache_clear()
    return get_settings()
