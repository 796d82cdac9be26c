"""Artifact files: traces, comparison tables, timing tables, plot scripts.

Also reads labeled datasets from delimited text.
"""

import csv
import logging
from collections.abc import Sequence
from pathlib import Path
from typing import Optional, Union

import numpy as np

from config.settings import get_settings
from core.benchmarks import LabeledDataset, SensorScene
from core.errors import DimensionError, ManifestError
from core.first_order import SolveResult
from core.problem import ConvergenceTrace
from core.runtime import TIMING_HEADER, TimingTable


logger = logging.getLogger(__name__)


# dual_res is the relative primal step, see TraceRecord.
TRACE_HEADER = ("iter", "objective", "primal_res", "dual_res", "step_norm", "seconds")
COMPARE_HEADER = ("solver",) + TRACE_HEADER
SUMMARY_HEADER = ("solver", "status", "iters", "primal_res", "objective")
SCENE_HEADER = ("sensor", "x_true", "y_true", "x_measured", "y_measured", "x_est", "y_est")


def _fmt(value: float) -> str:
    """Shortest round-tripping text for a float."""
    return repr(float(value))


def _trace_rows(trace: ConvergenceTrace, no_timing: bool) -> list[list[str]]:
    return [
        [
            str(r.iteration),
            _fmt(r.objective),
            _fmt(r.primal_res),
            _fmt(r.dual_res),
            _fmt(r.step_norm),
            _fmt(0.0 if no_timing else r.seconds),
        ]
        for r in trace
    ]


RUNTIME_PLOT_TEMPLATE = '''"""Runtime analysis plot generated by distopt bench."""

import csv

import matplotlib.pyplot as plt

TABLE = {table!r}

N, t_concurrent, t_sequential = [], [], []
with open(TABLE, newline="", encoding="utf-8") as f:
    for row in csv.DictReader(f):
        if row["status"].startswith("error"):
            continue
        N.append(int(row["N"]))
        t_concurrent.append(float(row["t_concurrent"]))
        t_sequential.append(float(row["t_sequential"]))

plt.plot(N, t_concurrent, "o-", label="decentral optimization")
plt.plot(N, t_sequential, "s-", label="central optimization")
plt.xlabel("number of sensors N")
plt.ylabel("runtime [s]")
plt.title("runtime analysis")
plt.legend()
plt.grid(True)
plt.show()
'''

CONVERGENCE_PLOT_TEMPLATE = '''"""Convergence plot generated by distopt solve."""

import csv

import matplotlib.pyplot as plt

TRACE = {trace!r}

it, primal, dual = [], [], []
with open(TRACE, newline="", encoding="utf-8") as f:
    for row in csv.DictReader(f):
        it.append(int(row["iter"]))
        primal.append(max(float(row["primal_res"]), 1e-16))
        dual.append(max(float(row["dual_res"]), 1e-16))

plt.semilogy(it, primal, label="primal residual")
plt.semilogy(it, dual, label="dual residual")
plt.xlabel("iteration")
plt.ylabel("residual")
plt.title({title!r})
plt.legend()
plt.grid(True)
plt.show()
'''


class ArtifactWriter:
    """Writes run artifacts below an output directory.

    Relative paths are resolved against the output directory; absolute
    paths are used as given.
    """

    def __init__(self, output_dir: Optional[Union[str, Path]] = None) -> None:
        """Initialize artifact writer.

        Args:
            output_dir: Optional custom output directory.
        """
        self._settings = get_settings()
        self._output_dir = Path(output_dir or self._settings.output_dir)

    @property
    def output_dir(self) -> Path:
        return self._output_dir

    def resolve(self, path: Union[str, Path]) -> Path:
        """Absolute or output-relative path, with parent directories created."""
        target = Path(path)
        if not target.is_absolute():
            target = self._output_dir / target
        target.parent.mkdir(parents=True, exist_ok=True)
        return target

    def _write_csv(self, path: Union[str, Path], header: Sequence[str], rows: list[list[str]]) -> Path:
        target = self.resolve(path)
        with open(target, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
        logger.info(f"Wrote {len(rows)} rows to {target}")
        return target

    def write_trace(self, trace: ConvergenceTrace, path: Union[str, Path], no_timing: bool = False) -> Path:
        """Write a convergence trace.

        Args:
            trace: Trace to write.
            path: Output file.
            no_timing: Write the seconds column as 0 so reruns are byte-identical.

        Returns:
            The written path.
        """
        return self._write_csv(path, TRACE_HEADER, _trace_rows(trace, no_timing))

    def write_comparison(
        self,
        results: dict[str, Union[SolveResult, str]],
        path: Union[str, Path],
        no_timing: bool = False,
    ) -> tuple[Path, Path]:
        """Write solver-tagged traces plus a summary table.

        Args:
            results: Solver name to its result, or to an error message.
            path: Trace output file; the summary goes next to it as <stem>_summary.csv.
            no_timing: Zero the seconds column.

        Returns:
            Tuple of (trace path, summary path).
        """
        rows: list[list[str]] = []
        summary: list[list[str]] = []
        for solver, result in results.items():
            if isinstance(result, str):
                summary.append([solver, result, "0", _fmt(float("nan")), _fmt(float("nan"))])
                continue
            rows.extend([solver] + row for row in _trace_rows(result.trace, no_timing))
            last = result.trace.last
            summary.append([
                solver,
                result.status.value,
                str(result.iterations),
                _fmt(result.primal_res),
                _fmt(float("nan") if last is None else last.objective),
            ])

        trace_path = self._write_csv(path, COMPARE_HEADER, rows)
        summary_path = self._write_csv(
            trace_path.with_name(f"{trace_path.stem}_summary.csv"), SUMMARY_HEADER, summary
        )
        return trace_path, summary_path

    def write_timing_table(self, table: TimingTable, path: Union[str, Path]) -> Path:
        rows = [
            [str(r.N), _fmt(r.sigma), _fmt(r.t_concurrent), _fmt(r.t_sequential), str(r.iterations), r.status]
            for r in table
        ]
        return self._write_csv(path, TIMING_HEADER, rows)

    def write_scene(self, scene: SensorScene, result: SolveResult, path: Union[str, Path]) -> Path:
        """Write true, measured and estimated sensor positions.

        Raises:
            DimensionError: If the result does not hold one block per sensor.
        """
        if len(result.state.x) != scene.N:
            raise DimensionError(f"result has {len(result.state.x)} blocks for {scene.N} sensors")
        truth = scene.ground_truth()
        rows = []
        for i, x in enumerate(result.state.x):
            rows.append([
                str(i),
                _fmt(truth[0, i]),
                _fmt(truth[1, i]),
                _fmt(scene.eta[0, i]),
                _fmt(scene.eta[1, i]),
                _fmt(x[0]),
                _fmt(x[1]),
            ])
        return self._write_csv(path, SCENE_HEADER, rows)

    def _write_script(self, path: Union[str, Path], text: str) -> Path:
        target = self.resolve(path)
        target.write_text(text, encoding="utf-8")
        logger.info(f"Wrote plot script {target}")
        return target

    def write_runtime_plot(self, table_path: Union[str, Path], path: Union[str, Path]) -> Path:
        """Write a matplotlib script plotting runtime against N for both modes."""
        return self._write_script(path, RUNTIME_PLOT_TEMPLATE.format(table=str(Path(table_path).resolve())))

    def write_convergence_plot(self, trace_path: Union[str, Path], path: Union[str, Path], title: str) -> Path:
        """Write a matplotlib script plotting both residuals of a trace."""
        text = CONVERGENCE_PLOT_TEMPLATE.format(trace=str(Path(trace_path).resolve()), title=title)
        return self._write_script(path, text)


def read_trace(path: Union[str, Path]) -> list[dict[str, str]]:
    """Read a trace (or comparison) CSV as row dictionaries."""
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


def load_dataset(path: Union[str, Path], delimiter: Optional[str] = None) -> LabeledDataset:
    """Read a labeled dataset from delimited text.

    Each row holds the features followed by a -1/+1 label. A first row that
    is not numeric is treated as a header. Commas and whitespace are both
    accepted when no delimiter is given.

    Raises:
        ManifestError: If the file cannot be read or is malformed.
    """
    path = Path(path)
    try:
        lines = [line.strip() for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]
    except OSError as e:
        raise ManifestError(f"cannot read dataset {path}: {e}") from e
    if not lines:
        raise ManifestError(f"dataset {path} is empty")

    sep = delimiter or ("," if "," in lines[0] else None)
    try:
        np.asarray(lines[0].split(sep), dtype=float)
    except ValueError:
        lines = lines[1:]
    if not lines:
        raise ManifestError(f"dataset {path} has a header but no rows")
    try:
        table = np.loadtxt(lines, delimiter=sep, ndmin=2)
    except ValueError as e:
        raise ManifestError(f"dataset {path} is not numeric: {e}") from e
    if table.shape[1] < 2:
        raise ManifestError(f"dataset {path} needs at least one feature column and a label column")

    try:
        data = LabeledDataset(points=table[:, :-1], labels=table[:, -1])
    except (DimensionError, ValueError) as e:
        raise ManifestError(f"dataset {path}: {e}") from e
    logger.info(f"Loaded {data.M} points with {data.n_x} features from {path}")
    return data
