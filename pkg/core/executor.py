"""Sequential or concurrent execution of independent block computations.

This is the only concurrency boundary in the library. Tasks read immutable
snapshots and return their result; results are delivered to pre-assigned
slots so callers see the same ordering in both modes.
"""

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from typing import Callable, Generic, Optional, Sequence, TypeVar

from pydantic import BaseModel, ConfigDict, Field

from config.settings import ExecutionKind, get_settings
from core.errors import TaskFailureError


logger = logging.getLogger(__name__)

T = TypeVar("T")


class ExecutionMode(BaseModel):
    """How a batch of block tasks is executed.

    Attributes:
        kind: Sequential or concurrent.
        worker_count: Thread count for concurrent runs (None = settings/CPU count).
    """

    model_config = ConfigDict(frozen=True)

    kind: ExecutionKind = ExecutionKind.SEQUENTIAL
    worker_count: Optional[int] = Field(default=None, ge=1)

    @classmethod
    def sequential(cls) -> "ExecutionMode":
        return cls(kind=ExecutionKind.SEQUENTIAL)

    @classmethod
    def concurrent(cls, worker_count: Optional[int] = None) -> "ExecutionMode":
        return cls(kind=ExecutionKind.CONCURRENT, worker_count=worker_count)

    @classmethod
    def from_settings(cls) -> "ExecutionMode":
        settings = get_settings()
        return cls(kind=settings.execution_kind, worker_count=settings.default_workers)

    def resolve_workers(self, task_count: int) -> int:
        """Worker count capped at the number of tasks."""
        if self.kind == ExecutionKind.SEQUENTIAL:
            return 1
        workers = self.worker_count or get_settings().default_workers or os.cpu_count() or 1
        return max(1, min(workers, task_count))


@dataclass(slots=True)
class BatchResult(Generic[T]):
    """Ordered task results.

    Attributes:
        results: One result per task, in task order.
        elapsed: Wall-clock seconds around the whole batch.
        workers: Number of workers used.
    """

    results: list[T]
    elapsed: float
    workers: int


def map_blocks(tasks: Sequence[Callable[[], T]], mode: Optional[ExecutionMode] = None) -> BatchResult[T]:
    """Run independent tasks and return their results in task order.

    Args:
        tasks: Zero-argument callables, side-effect free given their inputs.
        mode: Execution mode (default: from settings).

    Returns:
        BatchResult with ordered results and elapsed seconds.

    Raises:
        TaskFailureError: Carrying every failing task index.
    """
    mode = mode or ExecutionMode.from_settings()
    count = len(tasks)
    workers = mode.resolve_workers(count)
    slots: list[Optional[T]] = [None] * count
    failures: dict[int, BaseException] = {}

    start = time.perf_counter()
    if workers <= 1 or count <= 1:
        for i, task in enumerate(tasks):
            try:
                slots[i] = task()
            except Exception as e:
                failures[i] = e
    else:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            futures = {executor.submit(task): i for i, task in enumerate(tasks)}
            for future in as_completed(futures):
                i = futures[future]
                try:
                    slots[i] = future.result()
                except Exception as e:
                    failures[i] = e
    elapsed = time.perf_counter() - start

    if failures:
        logger.warning(f"{len(failures)} of {count} block tasks failed: {sorted(failures)}")
        raise TaskFailureError(failures)

    return BatchResult(results=list(slots), elapsed=elapsed, workers=workers)  # type: ignore[arg-type]
