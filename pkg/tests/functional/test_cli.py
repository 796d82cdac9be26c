"""End-to-end tests for the distopt command line."""

import json

import pytest

from core import aladin
from core.errors import BlockFailureError
from distopt import EXIT_NOT_CONVERGED, EXIT_OK, EXIT_USAGE, main
from utils.file_utils import TRACE_HEADER, read_trace
from utils.logging_utils import RunLogger


class TestSolveCommand:
    """Tests for distopt solve."""

    def test_consensus_admm_smoke(self, isolated_env, capsys):
        """Test the consensus quadratic converges to the mean."""
        code = main(["solve", "--benchmark", "consensus-quadratic", "--solver", "consensus-admm"])

        assert code == EXIT_OK
        assert capsys.readouterr().out.startswith("status=converged iters=")
        trace_path = isolated_env / "runs" / "consensus-quadratic-consensus-admm.csv"
        header = trace_path.read_text(encoding="utf-8").splitlines()[0]
        assert header == ",".join(TRACE_HEADER)
        assert float(read_trace(trace_path)[-1]["primal_res"]) <= 1e-8

    def test_run_recorded_in_history(self, isolated_env):
        """Test each solve appends a history entry."""
        main(["solve", "--benchmark", "linear-coupled", "--solver", "mom"])

        runs = RunLogger().get_recent_runs()
        assert len(runs) == 1
        assert runs[0]["command"] == "solve"
        assert runs[0]["problem"] == "linear-coupled"
        assert runs[0]["status"] == "converged"

    def test_unknown_solver(self, isolated_env, capsys):
        """Test an unknown solver exits with the usage code."""
        code = main(["solve", "--benchmark", "linear-coupled", "--solver", "bogus"])
        assert code == EXIT_USAGE
        assert "unknown solver" in capsys.readouterr().err

    def test_missing_source(self, isolated_env):
        """Test a solve without a problem source is rejected."""
        assert main(["solve", "--solver", "mom"]) == EXIT_USAGE

    def test_invalid_option(self, isolated_env):
        """Test an out-of-range option exits with the usage code."""
        code = main(["solve", "--benchmark", "linear-coupled", "--solver", "mom", "--max-iter", "0"])
        assert code == EXIT_USAGE

    def test_argparse_error(self, isolated_env):
        """Test a missing subcommand exits with the usage code."""
        assert main([]) == EXIT_USAGE

    def test_non_convergence_exit_code(self, isolated_env, capsys):
        """Test a run that hits its budget exits with 3 and still writes the trace."""
        code = main([
            "solve", "--benchmark", "random-quadratic", "--solver", "dual-ascent",
            "--max-iter", "3", "--trace", "short.csv",
        ])
        assert code == EXIT_NOT_CONVERGED
        assert "status=max-iter iters=3" in capsys.readouterr().out
        assert len(read_trace(isolated_env / "runs" / "short.csv")) == 3

    def test_aborted_run_still_writes_trace(self, isolated_env, monkeypatch, capsys):
        """Test a local step failure mid-run exits with 3 and keeps the completed iterations."""
        real_local_step = aladin.local_step
        calls = {"count": 0}

        def fail_after_first_round(block, lam, z_i, cfg, block_index=0):
            calls["count"] += 1
            if calls["count"] > 5:
                raise BlockFailureError("local solve blew up", block_index)
            return real_local_step(block, lam, z_i, cfg, block_index=block_index)

        monkeypatch.setattr(aladin, "local_step", fail_after_first_round)
        code = main([
            "solve", "--benchmark", "sensor", "--n", "5", "--solver", "aladin",
            "--execution", "sequential", "--trace", "aborted.csv",
        ])

        assert code == EXIT_NOT_CONVERGED
        assert "status=error iters=1" in capsys.readouterr().out
        assert len(read_trace(isolated_env / "runs" / "aborted.csv")) == 1

    def test_failure_before_first_iteration_writes_header(self, isolated_env, monkeypatch):
        """Test a failure in the first round leaves a header-only trace."""

        def always_fail(block, lam, z_i, cfg, block_index=0):
            raise BlockFailureError("local solve blew up", block_index)

        monkeypatch.setattr(aladin, "local_step", always_fail)
        code = main(["solve", "--benchmark", "sensor", "--solver", "aladin", "--trace", "empty.csv"])

        assert code == EXIT_NOT_CONVERGED
        lines = (isolated_env / "runs" / "empty.csv").read_text(encoding="utf-8").splitlines()
        assert lines == [",".join(TRACE_HEADER)]

    def test_admm_needs_two_blocks(self, isolated_env):
        """Test two-block ADMM rejects the five-block sensor problem."""
        assert main(["solve", "--benchmark", "random-quadratic", "--solver", "admm"]) == EXIT_OK
        assert main(["solve", "--benchmark", "sensor", "--solver", "admm"]) == EXIT_USAGE

    def test_logistic_aladin(self, isolated_env):
        """Test the logistic benchmark with penalty 1e3 and proximal weight 1e4."""
        main([
            "solve", "--benchmark", "logistic", "--nsub", "10", "--solver", "aladin",
            "--rho", "1e3", "--nu", "1e4", "--max-iter", "10", "--trace", "logistic.csv",
        ])
        rows = read_trace(isolated_env / "runs" / "logistic.csv")
        assert len(rows) <= 10
        assert float(rows[-1]["primal_res"]) < 1e-4

    def test_plot_script_and_scene(self, isolated_env):
        """Test the sensor run writes a plot script and a position export."""
        code = main([
            "solve", "--benchmark", "sensor", "--n", "5", "--sigma", "0.5", "--solver", "aladin",
            "--plot-script", "plot.py", "--scene", "scene.csv",
        ])
        assert code in (EXIT_OK, EXIT_NOT_CONVERGED)
        runs = isolated_env / "runs"
        assert "sensors-5-aladin.csv" in (runs / "plot.py").read_text(encoding="utf-8")
        assert len(read_trace(runs / "scene.csv")) == 5

    def test_manifest_run(self, isolated_env, temp_dir):
        """Test a run manifest with command-line overrides."""
        manifest = temp_dir / "run.json"
        manifest.write_text(
            json.dumps({
                "benchmark": "consensus-quadratic",
                "params": {"centers": [1.0, 2.0, 6.0]},
                "solver": "consensus-admm",
                "trace_path": "from-manifest.csv",
            }),
            encoding="utf-8",
        )
        code = main(["solve", "--manifest", str(manifest), "--rho", "2.0"])
        assert code == EXIT_OK
        assert (isolated_env / "runs" / "from-manifest.csv").exists()

    def test_output_dir_flag(self, isolated_env, temp_dir):
        """Test --output-dir overrides the configured directory."""
        out = temp_dir / "elsewhere"
        code = main([
            "--output-dir", str(out), "solve", "--benchmark", "linear-coupled", "--solver", "mom",
        ])
        assert code == EXIT_OK
        assert (out / "linear-coupled-mom.csv").exists()


class TestBenchCommand:
    """Tests for distopt bench."""

    def test_single_point(self, isolated_env, capsys):
        """Test one sweep point gives a one-row table and a plot script."""
        code = main(["bench", "sensors", "--n", "5", "--sigma", "0.5", "--max-iter", "5"])

        assert code == EXIT_OK
        runs = isolated_env / "runs"
        rows = read_trace(runs / "runtime_table.csv")
        assert len(rows) == 1
        assert rows[0]["N"] == "5"
        script = (runs / "plot_runtime.py").read_text(encoding="utf-8")
        assert "central optimization" in script
        assert "N=5 sigma=0.5" in capsys.readouterr().out

    def test_length_mismatch(self, isolated_env):
        """Test sweep vectors of different length are rejected."""
        assert main(["bench", "sensors", "--n", "5,10", "--sigma", "0.5"]) == EXIT_USAGE

    def test_missing_vectors(self, isolated_env):
        """Test a sweep without vectors is rejected."""
        assert main(["bench", "sensors"]) == EXIT_USAGE

    def test_bad_list(self, isolated_env):
        """Test a non-numeric sweep entry is rejected."""
        assert main(["bench", "sensors", "--n", "five", "--sigma", "0.5"]) == EXIT_USAGE


class TestCompareCommand:
    """Tests for distopt compare."""

    def test_behavioral_contrast(self, isolated_env):
        """Test dual decomposition fails where the method of multipliers converges."""
        code = main(["compare", "--benchmark", "linear-coupled", "--solvers", "dual-decomp,mom"])

        assert code == EXIT_OK
        summary = {
            row["solver"]: row for row in read_trace(isolated_env / "runs" / "compare_summary.csv")
        }
        assert summary["dual-decomp"]["status"] in ("oscillating", "diverged")
        assert summary["mom"]["status"] == "converged"
        solvers = {row["solver"] for row in read_trace(isolated_env / "runs" / "compare.csv")}
        assert "mom" in solvers

    def test_admm_and_aladin_agree(self, isolated_env):
        """Test both solvers converge on the consensus quadratic."""
        code = main([
            "compare", "--benchmark", "consensus-quadratic", "--solvers", "admm,aladin",
        ])
        assert code == EXIT_OK
        summary = read_trace(isolated_env / "runs" / "compare_summary.csv")
        assert [row["status"] for row in summary] == ["converged", "converged"]

    def test_failure_recorded(self, isolated_env):
        """Test a solver that cannot run is recorded and the comparison continues."""
        code = main(["compare", "--benchmark", "sensor", "--solvers", "mom,aladin", "--max-iter", "5"])
        assert code == EXIT_OK
        summary = {
            row["solver"]: row for row in read_trace(isolated_env / "runs" / "compare_summary.csv")
        }
        assert summary["mom"]["status"] == "error: UnsupportedProblemError"
        assert summary["aladin"]["status"] != ""

    def test_one_solver_rejected(self, isolated_env):
        """Test a comparison needs at least two solvers."""
        assert main(["compare", "--benchmark", "linear-coupled", "--solvers", "mom"]) == EXIT_USAGE


class TestHistoryCommand:
    """Tests for distopt history."""

    def test_empty_history(self, isolated_env, capsys):
        """Test an empty history prints a notice."""
        assert main(["history"]) == EXIT_OK
        assert capsys.readouterr().out.strip() == "no runs recorded"

    def test_recent_runs_newest_first(self, isolated_env, capsys):
        """Test solves are listed newest first and limited."""
        main(["solve", "--benchmark", "linear-coupled", "--solver", "mom"])
        main(["solve", "--benchmark", "consensus-quadratic", "--solver", "consensus-admm"])
        capsys.readouterr()

        assert main(["history", "--limit", "1"]) == EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        assert len(lines) == 1
        assert "problem=consensus-quadratic solver=consensus-admm status=converged" in lines[0]

        assert main(["history"]) == EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        assert len(lines) == 2
        assert "problem=linear-coupled solver=mom" in lines[1]

    def test_invalid_limit(self, isolated_env):
        """Test a non-positive limit exits with the usage code."""
        assert main(["history", "--limit", "0"]) == EXIT_USAGE


class TestConfigCommand:
    """Tests for distopt config."""

    def test_show(self, isolated_env, capsys):
        """Test defaults are printed as JSON."""
        assert main(["config", "show"]) == EXIT_OK
        data = json.loads(capsys.readouterr().out)
        assert data["aladin"]["rho"] == pytest.approx(1e3)
        assert data["aladin"]["nu"] == pytest.approx(1e4)
        assert data["settings"]["output_dir"] == str(isolated_env / "runs")
        assert set(data) == {"settings", "solver", "aladin", "sqp"}
