"""Run history logging utilities.

Provides persistent logging of CLI solver runs with automatic rotation to
keep the history file small.
"""

import json
import logging
import uuid
from datetime import datetime, timedelta
from pathlib import Path
from threading import Lock
from typing import Optional

from config.settings import get_settings
from core.first_order import SolveResult


logger = logging.getLogger(__name__)


class RunLogger:
    """Manages run history logging with JSON persistence.

    Every CLI run (solve, bench, compare) appends one entry. Entries older
    than the configured retention are dropped when the logger is created.
    """

    def __init__(self, log_path: Optional[str] = None) -> None:
        """Initialize run logger.

        Args:
            log_path: Optional custom path for the history file.
        """
        self._settings = get_settings()
        self._log_path = Path(log_path or self._settings.history_path)
        self._lock = Lock()
        self._ensure_log_file()
        self._rotate_old_logs()

    @property
    def path(self) -> Path:
        return self._log_path

    def _ensure_log_file(self) -> None:
        if not self._log_path.exists():
            self._log_path.parent.mkdir(parents=True, exist_ok=True)
            self._write_log({"runs": []})
            logger.info(f"Created run history at {self._log_path}")

    def _read_log(self) -> dict:
        try:
            with open(self._log_path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except (json.JSONDecodeError, FileNotFoundError):
            return {"runs": []}
        if not isinstance(data, dict) or not isinstance(data.get("runs"), list):
            return {"runs": []}
        return data

    def _write_log(self, data: dict) -> None:
        with open(self._log_path, "w", encoding="utf-8") as f:
            json.dump(data, f, indent=2, default=str)

    def _rotate_old_logs(self) -> None:
        """Remove entries older than the retention period."""
        with self._lock:
            log_data = self._read_log()
            cutoff = (datetime.now() - timedelta(days=self._settings.log_retention_days)).isoformat()

            original_count = len(log_data["runs"])
            log_data["runs"] = [r for r in log_data["runs"] if r.get("timestamp", "") >= cutoff]

            removed = original_count - len(log_data["runs"])
            if removed > 0:
                self._write_log(log_data)
                logger.info(f"Rotated {removed} old run entries")

    def log_run(
        self,
        command: str,
        problem: str,
        solver: str,
        status: str,
        iterations: int = 0,
        primal_res: float = float("nan"),
        duration_s: float = 0.0,
    ) -> str:
        """Append one run entry.

        Args:
            command: CLI subcommand.
            problem: Problem or benchmark name.
            solver: Solver name (or a comma-joined list for compare).
            status: Final status, or "error: ..." for failed runs.
            iterations: Outer iterations performed.
            primal_res: Final coupling residual.
            duration_s: Wall-clock seconds.

        Returns:
            The new entry's id.
        """
        run_id = uuid.uuid4().hex[:12]
        entry = {
            "id": run_id,
            "timestamp": datetime.now().isoformat(),
            "command": command,
            "problem": problem,
            "solver": solver,
            "status": status,
            "iterations": iterations,
            "primal_res": primal_res if primal_res == primal_res else None,
            "duration_s": round(duration_s, 6),
        }

        with self._lock:
            log_data = self._read_log()
            log_data["runs"].append(entry)
            self._write_log(log_data)

        logger.debug(f"Logged run {run_id}")
        return run_id

    def log_result(self, command: str, problem: str, result: SolveResult, duration_s: float) -> str:
        """Append an entry summarizing a solver result."""
        return self.log_run(
            command=command,
            problem=problem,
            solver=result.solver,
            status=result.status.value,
            iterations=result.iterations,
            primal_res=result.primal_res,
            duration_s=duration_s,
        )

    def get_recent_runs(self, limit: int = 10) -> list[dict]:
        """Get recent runs, most recent first."""
        with self._lock:
            runs = self._read_log()["runs"]
            return list(reversed(runs[-limit:]))


_logging_configured = False


def configure_logging(level: str = "INFO", log_file: Optional[str] = None) -> None:
    """Configure application logging.

    Installs a stderr handler and, when log_file is given, a file handler.
    Calling it again is a no-op.

    Args:
        level: Logging level (DEBUG, INFO, WARNING, ERROR).
        log_file: Optional path to a log file.
    """
    global _logging_configured
    if _logging_configured:
        return
    _logging_configured = True

    log_level = getattr(logging, level.upper(), logging.INFO)
    log_format = "%(asctime)s | %(levelname)s | %(name)s | %(message)s"
    date_format = "%Y-%m-%d %H:%M:%S"

    root_logger = logging.getLogger()
    root_logger.setLevel(log_level)

    # Console handler (stderr)
    console_handler = logging.StreamHandler()
    console_handler.setLevel(log_level)
    console_handler.setFormatter(logging.Formatter(log_format, date_format))
    root_logger.addHandler(console_handler)

    if log_file:
        file_handler = logging.FileHandler(log_file, mode="a", encoding="utf-8")
        file_handler.setLevel(log_level)
        file_handler.setFormatter(logging.Formatter(log_format, date_format))
        root_logger.addHandler(file_handler)
