#!/usr/bin/env python3
"""distopt - Distributed optimization command line.

Solves block-separable problems with dual methods, ADMM, ALADIN or a
centralized SQP reference, runs the sensor runtime sweep and compares
solvers side by side.

Usage:
    python distopt.py solve --benchmark consensus-quadratic --solver consensus-admm
    python distopt.py solve --benchmark logistic --nsub 10 --solver aladin --rho 1e3 --nu 1e4 --max-iter 10
    python distopt.py solve --problem problem.json --solver mom --trace mom.csv --plot-script mom_plot.py
    python distopt.py solve --manifest run.json
    python distopt.py bench sensors --default-sweep
    python distopt.py bench sensors --n 5,10 --sigma 0.5,1.0 --repeats 3
    python distopt.py compare --benchmark linear-coupled --solvers dual-decomp,mom
    python distopt.py history --limit 5
    python distopt.py config show

Exit codes: 0 converged (or report written), 2 usage or configuration error,
3 solver did not converge.
"""

import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import Any, Optional, Sequence

from pydantic import ValidationError

from config.settings import ExecutionKind, get_settings
from core.aladin import AladinConfig
from core.benchmarks import gen_sensor_scene
from core.errors import (
    DimensionError,
    DistOptError,
    ManifestError,
    PartitionError,
    UnsupportedProblemError,
)
from core.executor import ExecutionMode
from core.first_order import SolverConfig
from core.manifest import (
    BenchmarkName,
    BenchmarkParams,
    RunManifest,
    SolverName,
    make_config,
    run_solver,
    solver_config_type,
)
from core.runtime import DEFAULT_SWEEP_N, DEFAULT_SWEEP_SIGMA, runtime_sweep
from core.sqp import SqpConfig
from utils.file_utils import ArtifactWriter
from utils.logging_utils import RunLogger, configure_logging


logger = logging.getLogger("distopt")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NOT_CONVERGED = 3

# Errors caused by the inputs rather than by the iteration
INPUT_ERRORS = (
    ManifestError,
    DimensionError,
    PartitionError,
    UnsupportedProblemError,
    ValidationError,
    OSError,
    ValueError,
)


def _parse_list(text: str, cast: type) -> list:
    try:
        return [cast(item) for item in text.split(",") if item.strip()]
    except ValueError as e:
        raise ManifestError(f"cannot parse list '{text}': {e}") from e


def _add_problem_args(parser: argparse.ArgumentParser) -> None:
    source = parser.add_mutually_exclusive_group()
    source.add_argument(
        "--benchmark",
        choices=[b.value for b in BenchmarkName],
        help="Built-in problem generator",
    )
    source.add_argument("--problem", type=Path, help="Problem manifest JSON file")
    parser.add_argument("--seed", type=int, help="Generator seed")
    parser.add_argument("--nsub", type=int, help="Logistic: number of data blocks")
    parser.add_argument("--M", type=int, dest="M", help="Logistic: synthetic dataset size")
    parser.add_argument("--gamma", type=float, help="Logistic: regularization weight")
    parser.add_argument("--dataset", type=Path, help="Logistic: delimited dataset file")
    parser.add_argument("--n", type=int, dest="N", help="Sensor: number of sensors")
    parser.add_argument("--sigma", type=float, help="Sensor: measurement noise")


def _add_solver_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--rho", type=float, help="Penalty parameter")
    parser.add_argument("--nu", type=float, help="ALADIN proximal weight")
    parser.add_argument("--alpha", type=float, help="Dual step size")
    parser.add_argument("--max-iter", type=int, help="Outer iteration budget")
    parser.add_argument("--tol", type=float, help="Primal and dual tolerance")
    parser.add_argument(
        "--execution",
        choices=[k.value for k in ExecutionKind],
        help="Sequential or concurrent block execution",
    )
    parser.add_argument("--workers", type=int, help="Worker count for concurrent execution")
    parser.add_argument("--no-timing", action="store_true", help="Write the seconds column as 0")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="distopt",
        description="Distributed optimization of block-separable problems",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=__doc__.split("Usage:")[1] if __doc__ else None,
    )
    parser.add_argument("--output-dir", type=Path, help="Artifact directory (default: DISTOPT_OUTPUT_DIR)")
    parser.add_argument("--history", type=Path, help="Run history JSON (default: DISTOPT_HISTORY)")
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="Solve one problem")
    solve.add_argument("--manifest", type=Path, help="Run manifest JSON file")
    _add_problem_args(solve)
    solve.add_argument("--solver", help="Solver name: " + ", ".join(s.value for s in SolverName))
    _add_solver_args(solve)
    solve.add_argument("--trace", type=Path, help="Trace CSV path")
    solve.add_argument("--plot-script", type=Path, help="Convergence plot script path")
    solve.add_argument("--scene", type=Path, help="Sensor benchmark: position export path")

    bench = sub.add_parser("bench", help="Runtime sweep")
    bench.add_argument("target", choices=["sensors"], help="Benchmark family")
    bench.add_argument("--n", help="Comma-separated sensor counts")
    bench.add_argument("--sigma", help="Comma-separated noise levels, one per count")
    bench.add_argument("--default-sweep", action="store_true", help="Use the 14-point default sweep")
    bench.add_argument("--repeats", type=int, default=1, help="Runs per mode; the best time is kept")
    bench.add_argument("--seed", type=int, default=0, help="Scene seed")
    bench.add_argument("--rho", type=float, help="ALADIN penalty")
    bench.add_argument("--nu", type=float, help="ALADIN proximal weight")
    bench.add_argument("--max-iter", type=int, help="Outer iteration budget")
    bench.add_argument("--workers", type=int, help="Worker count for the concurrent runs")
    bench.add_argument("--table", type=Path, default=Path("runtime_table.csv"), help="Timing table path")
    bench.add_argument("--plot-script", type=Path, default=Path("plot_runtime.py"), help="Plot script path")

    compare = sub.add_parser("compare", help="Run several solvers on one problem")
    _add_problem_args(compare)
    compare.add_argument("--solvers", required=True, help="Comma-separated solver names (at least 2)")
    _add_solver_args(compare)
    compare.add_argument("--trace", type=Path, default=Path("compare.csv"), help="Tagged trace CSV path")

    config = sub.add_parser("config", help="Configuration")
    config.add_argument("action", choices=["show"], help="Print defaults as JSON")

    history = sub.add_parser("history", help="Show recent runs")
    history.add_argument("--limit", type=int, default=10, help="Number of runs to show (default: 10)")

    return parser


def _params(args: argparse.Namespace, base: Optional[BenchmarkParams] = None) -> BenchmarkParams:
    given = {
        "seed": args.seed,
        "n_sub": args.nsub,
        "M": args.M,
        "gamma": args.gamma,
        "dataset": args.dataset,
        "N": args.N,
        "sigma": args.sigma,
    }
    update = {k: v for k, v in given.items() if v is not None}
    data = (base.model_dump() if base is not None else {}) | update
    return BenchmarkParams(**data)


def _overrides(args: argparse.Namespace, solver: SolverName) -> dict[str, Any]:
    """Solver config fields set on the command line."""
    overrides: dict[str, Any] = {}
    config_type = solver_config_type(solver)
    for name in ("rho", "nu", "alpha", "max_iter"):
        value = getattr(args, name)
        if value is not None:
            overrides[name] = value
    if args.tol is not None:
        if config_type is SqpConfig:
            overrides["tol"] = args.tol
        else:
            overrides["tol_primal"] = args.tol
            overrides["tol_dual"] = args.tol
    if (args.execution or args.workers) and "execution" in config_type.model_fields:
        kind = ExecutionKind(args.execution) if args.execution else ExecutionKind.CONCURRENT
        overrides["execution"] = ExecutionMode(kind=kind, worker_count=args.workers)
    return overrides


def _solver_name(text: Optional[str]) -> SolverName:
    if not text:
        raise ManifestError("no solver given; use --solver")
    try:
        return SolverName(text)
    except ValueError as e:
        choices = ", ".join(s.value for s in SolverName)
        raise ManifestError(f"unknown solver '{text}' (choose from {choices})") from e


def _run_manifest(args: argparse.Namespace) -> RunManifest:
    """Assemble the run from a manifest file and/or command-line flags."""
    if args.manifest is not None:
        manifest = RunManifest.load(args.manifest)
        solver = _solver_name(args.solver) if args.solver else manifest.solver
        update: dict[str, Any] = {
            "solver": solver,
            "params": _params(args, manifest.params),
            "overrides": manifest.overrides | _overrides(args, solver),
        }
        if args.trace is not None:
            update["trace_path"] = args.trace
        if args.plot_script is not None:
            update["plot_script"] = args.plot_script
        if args.scene is not None:
            update["scene_path"] = args.scene
        return RunManifest.model_validate(manifest.model_dump() | update)

    if args.benchmark is None and args.problem is None:
        raise ManifestError("give --benchmark, --problem or --manifest")
    solver = _solver_name(args.solver)
    return RunManifest(
        benchmark=args.benchmark,
        problem_file=args.problem,
        params=_params(args),
        solver=solver,
        overrides=_overrides(args, solver),
        trace_path=args.trace,
        plot_script=args.plot_script,
        scene_path=args.scene,
    )


def cmd_solve(args: argparse.Namespace, writer: ArtifactWriter, history: RunLogger) -> int:
    """Solve one problem and write its trace."""
    manifest = _run_manifest(args)
    problem = manifest.build_problem()
    cfg = manifest.solver_config()
    solver = manifest.solver
    trace_target = manifest.trace_path or Path(f"{problem.name}-{solver.value}.csv")

    start = time.perf_counter()
    try:
        result = run_solver(solver, problem, cfg)
    except UnsupportedProblemError:
        raise
    except DistOptError as e:
        duration = time.perf_counter() - start
        logger.error(f"{solver.value} failed on '{problem.name}': {e}")
        history.log_run("solve", problem.name, solver.value, f"error: {type(e).__name__}", duration_s=duration)
        iters = 0
        if e.partial_trace is not None:
            iters = len(e.partial_trace)
            writer.write_trace(e.partial_trace, trace_target, no_timing=args.no_timing)
        print(f"status=error iters={iters} primal_res=nan ({type(e).__name__})")
        return EXIT_NOT_CONVERGED
    duration = time.perf_counter() - start

    trace_path = writer.write_trace(result.trace, trace_target, no_timing=args.no_timing)
    if manifest.plot_script is not None:
        writer.write_convergence_plot(trace_path, manifest.plot_script, f"{solver.value} on {problem.name}")
    if manifest.scene_path is not None:
        if manifest.benchmark != BenchmarkName.SENSOR:
            logger.warning("--scene only applies to the sensor benchmark; skipped")
        else:
            p = manifest.params
            writer.write_scene(gen_sensor_scene(p.N, p.sigma, p.seed), result, manifest.scene_path)

    history.log_result("solve", problem.name, result, duration)
    print(f"status={result.status.value} iters={result.iterations} primal_res={result.primal_res:.3e}")
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def cmd_bench(args: argparse.Namespace, writer: ArtifactWriter, history: RunLogger) -> int:
    """Time ALADIN on sensor problems with concurrent and sequential local steps."""
    if args.default_sweep:
        Ns, sigmas = list(DEFAULT_SWEEP_N), list(DEFAULT_SWEEP_SIGMA)
    elif args.n and args.sigma:
        Ns, sigmas = _parse_list(args.n, int), _parse_list(args.sigma, float)
    else:
        raise ManifestError("give --default-sweep or both --n and --sigma")

    given = {"rho": args.rho, "nu": args.nu, "max_iter": args.max_iter}
    options: dict[str, Any] = {k: v for k, v in given.items() if v is not None}
    options["execution"] = ExecutionMode.concurrent(args.workers)
    cfg = AladinConfig(**options)

    start = time.perf_counter()
    table = runtime_sweep(Ns, sigmas, cfg, seed=args.seed, repeats=args.repeats)
    duration = time.perf_counter() - start

    table_path = writer.write_timing_table(table, args.table)
    writer.write_runtime_plot(table_path, args.plot_script)
    for row in table:
        print(
            f"N={row.N} sigma={row.sigma} t_concurrent={row.t_concurrent:.4f} "
            f"t_sequential={row.t_sequential:.4f} iters={row.iterations} status={row.status}"
        )
    history.log_run("bench", f"sensors x{len(table)}", "aladin", "completed", duration_s=duration)
    return EXIT_OK


def cmd_compare(args: argparse.Namespace, writer: ArtifactWriter, history: RunLogger) -> int:
    """Run each solver on the same problem; failures are recorded, not fatal."""
    solvers = [_solver_name(name.strip()) for name in args.solvers.split(",") if name.strip()]
    if len(solvers) < 2:
        raise ManifestError("compare needs at least two solvers")
    if args.benchmark is None and args.problem is None:
        raise ManifestError("give --benchmark or --problem")

    manifest = RunManifest(
        benchmark=args.benchmark,
        problem_file=args.problem,
        params=_params(args),
        solver=solvers[0],
    )
    problem = manifest.build_problem()

    results: dict[str, Any] = {}
    start = time.perf_counter()
    for solver in solvers:
        fields = solver_config_type(solver).model_fields
        overrides = {k: v for k, v in _overrides(args, solver).items() if k in fields}
        try:
            results[solver.value] = run_solver(solver, problem, make_config(solver, overrides))
        except DistOptError as e:
            logger.warning(f"{solver.value} failed on '{problem.name}': {e}")
            results[solver.value] = f"error: {type(e).__name__}"
    duration = time.perf_counter() - start

    writer.write_comparison(results, args.trace, no_timing=args.no_timing)
    for name, result in results.items():
        if isinstance(result, str):
            print(f"solver={name} status={result}")
        else:
            print(f"solver={name} status={result.status.value} iters={result.iterations} primal_res={result.primal_res:.3e}")
    history.log_run("compare", problem.name, ",".join(results), "completed", duration_s=duration)
    return EXIT_OK


def cmd_history(args: argparse.Namespace, history: RunLogger) -> int:
    """Print the most recent history entries, newest first."""
    if args.limit < 1:
        raise ManifestError(f"--limit must be >= 1, got {args.limit}")
    runs = history.get_recent_runs(args.limit)
    if not runs:
        print("no runs recorded")
    for run in runs:
        residual = "-" if run.get("primal_res") is None else f"{run['primal_res']:.3e}"
        print(
            f"{run['timestamp']} {run['id']} {run['command']} problem={run['problem']} "
            f"solver={run['solver']} status={run['status']} iters={run['iterations']} primal_res={residual}"
        )
    return EXIT_OK


def cmd_config(args: argparse.Namespace) -> int:
    """Print settings and solver defaults as JSON."""
    defaults = {
        "settings": get_settings().model_dump(mode="json"),
        "solver": SolverConfig().model_dump(mode="json"),
        "aladin": AladinConfig().model_dump(mode="json"),
        "sqp": SqpConfig().model_dump(mode="json"),
    }
    print(json.dumps(defaults, indent=2))
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    settings = get_settings()
    configure_logging("DEBUG" if args.verbose else settings.log_level, settings.log_file)

    if args.command == "config":
        return cmd_config(args)

    try:
        writer = ArtifactWriter(args.output_dir)
        history = RunLogger(str(args.history) if args.history else None)
        if args.command == "history":
            return cmd_history(args, history)
        if args.command == "solve":
            return cmd_solve(args, writer, history)
        if args.command == "bench":
            return cmd_bench(args, writer, history)
        return cmd_compare(args, writer, history)
    except (DistOptError, *INPUT_ERRORS) as e:
        logger.error(str(e))
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
