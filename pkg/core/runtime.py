"""Runtime sweep: sensor localization solved with concurrent and sequential local steps."""

import logging
import time
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

from config.settings import ExecutionKind
from core.aladin import AladinConfig, run_aladin
from core.benchmarks import gen_sensor_problem, gen_sensor_scene
from core.errors import DimensionError, DistOptError
from core.executor import ExecutionMode


logger = logging.getLogger(__name__)


DEFAULT_SWEEP_N = [5, 10, 15, 20, 25, 30, 35, 40, 50, 60, 70, 80, 90, 100]
DEFAULT_SWEEP_SIGMA = [0.5, 1.0, 1.5, 2.0, 2.5, 2.5, 2.5, 2.5, 2.5, 2.5, 2.5, 2.5, 2.5, 2.5]

TIMING_HEADER = ("N", "sigma", "t_concurrent", "t_sequential", "iters", "status")


@dataclass(frozen=True, slots=True)
class TimingRow:
    """One sweep cell.

    Attributes:
        N: Sensor count.
        sigma: Noise level.
        t_concurrent: Best wall-clock seconds with concurrent local steps.
        t_sequential: Best wall-clock seconds with sequential local steps.
        iterations: Outer iterations of the sequential run.
        status: Solver status, or "error: ..." when a run failed.
    """

    N: int
    sigma: float
    t_concurrent: float
    t_sequential: float
    iterations: int
    status: str

    def __post_init__(self) -> None:
        if self.t_concurrent < 0 or self.t_sequential < 0:
            raise ValueError("timings must be non-negative")

    @property
    def speedup(self) -> float:
        return self.t_sequential / self.t_concurrent if self.t_concurrent > 0 else float("nan")

    def as_tuple(self) -> tuple[object, ...]:
        return (self.N, self.sigma, self.t_concurrent, self.t_sequential, self.iterations, self.status)


@dataclass
class TimingTable:
    """Ordered sweep results."""

    rows: list[TimingRow] = field(default_factory=list)

    def append(self, row: TimingRow) -> None:
        self.rows.append(row)

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self) -> Iterator[TimingRow]:
        return iter(self.rows)


def _timed_run(N: int, sigma: float, cfg: AladinConfig, seed: int, kind: ExecutionKind) -> tuple[float, int, str]:
    problem = gen_sensor_problem(gen_sensor_scene(N, sigma, seed))
    run_cfg = cfg.model_copy(update={"execution": ExecutionMode(kind=kind, worker_count=cfg.execution.worker_count)})
    start = time.perf_counter()
    result = run_aladin(problem, run_cfg)
    return time.perf_counter() - start, result.iterations, result.status.value


def runtime_sweep(
    Ns: Sequence[int],
    sigmas: Sequence[float],
    cfg: Optional[AladinConfig] = None,
    seed: int = 0,
    repeats: int = 1,
) -> TimingTable:
    """Time ALADIN on sensor problems of growing size in both execution modes.

    A failing cell is recorded with status "error: ..." and the sweep continues.

    Args:
        Ns: Sensor counts.
        sigmas: Noise level per entry of Ns.
        cfg: ALADIN options (execution kind is overridden per run).
        seed: Scene seed.
        repeats: Runs per mode; the minimum time is kept.

    Raises:
        DimensionError: If Ns and sigmas differ in length.
    """
    if len(Ns) != len(sigmas):
        raise DimensionError(f"got {len(Ns)} sizes but {len(sigmas)} noise levels")
    if repeats < 1:
        raise ValueError(f"repeats must be >= 1, got {repeats}")
    cfg = cfg or AladinConfig()
    table = TimingTable()

    for N, sigma in zip(Ns, sigmas):
        try:
            concurrent = [_timed_run(N, sigma, cfg, seed, ExecutionKind.CONCURRENT) for _ in range(repeats)]
            sequential = [_timed_run(N, sigma, cfg, seed, ExecutionKind.SEQUENTIAL) for _ in range(repeats)]
        except (DistOptError, ValueError) as e:
            logger.warning(f"Sweep cell N={N} sigma={sigma} failed: {e}")
            table.append(TimingRow(N, float(sigma), 0.0, 0.0, 0, f"error: {type(e).__name__}"))
            continue
        row = TimingRow(
            N=N,
            sigma=float(sigma),
            t_concurrent=min(t for t, _, _ in concurrent),
            t_sequential=min(t for t, _, _ in sequential),
            iterations=sequential[0][1],
            status=sequential[0][2],
        )
        logger.info(
            f"Sweep N={N} sigma={sigma}: concurrent {row.t_concurrent:.3f}s, "
            f"sequential {row.t_sequential:.3f}s, speedup {row.speedup:.2f}"
        )
        table.append(row)
    return table
