"""Command-line workflow tests: exit codes, artifacts, determinism."""

import json
import os

import pytest

from coneflow import bundled_config, parse_config, serialize_config
from coneflow.cli import main

FAST = ["--set", "sweeps.t=[0.5,0.2,0.1]", "--set", "sweeps.h_step=0.01"]


def run(tmp_path, *args):
    return main(["--out", str(tmp_path)] + list(args))


class TestExitCodes:
    def test_verify_pass_is_zero(self, tmp_path, capsys):
        code = run(tmp_path, "--command", "verify",
                   "--scenario", "linear_sink_2d", *FAST)
        assert code == 0
        out = capsys.readouterr().out
        assert "linear_sink_2d: field degree 1, t_star 0.5 -> PASS" in out

    def test_verify_failure_is_one(self, tmp_path, capsys):
        code = run(tmp_path, "--command", "verify",
                   "--scenario", "linear_sink_2d", *FAST,
                   "--set", "expected_degree=2")
        assert code == 1
        assert "-> FAIL" in capsys.readouterr().out

    def test_malformed_scenario_file_is_two(self, tmp_path, capsys):
        bad = tmp_path / "broken.json"
        bad.write_text('{"name": "x",\n  "oops"\n')
        code = run(tmp_path, "--command", "verify", "--scenario", str(bad))
        assert code == 2
        err = capsys.readouterr().err
        assert "line" in err and "column" in err

    def test_unknown_scenario_is_two(self, tmp_path, capsys):
        code = run(tmp_path, "--command", "degree", "--scenario", "nope")
        assert code == 2
        assert "input error" in capsys.readouterr().err

    def test_bad_override_is_two(self, tmp_path, capsys):
        code = run(tmp_path, "--command", "degree",
                   "--scenario", "linear_sink_2d", "--set", "nosuch.key=1")
        assert code == 2
        code = run(tmp_path, "--command", "degree",
                   "--scenario", "linear_sink_2d", "--set", "noequals")
        assert code == 2

    def test_missing_arguments_is_two(self, tmp_path, capsys):
        assert main([]) == 2
        assert "required" in capsys.readouterr().err
        assert main(["--command", "nosuchcmd", "--scenario", "x"]) == 2

    def test_index_unsupported_dimension_is_two(self, tmp_path, capsys):
        code = run(tmp_path, "--command", "degree",
                   "--scenario", "orthant_logistic")
        assert code == 2
        assert "dimension" in capsys.readouterr().err

    def test_boundary_zero_is_three(self, tmp_path, capsys):
        # shrinking the region puts the equilibrium (1,1) on its corner
        code = run(tmp_path, "--command", "degree",
                   "--scenario", "orthant_contraction",
                   "--set", "region.lo=[0.5,0.5]",
                   "--set", "region.hi=[1.0,1.0]")
        assert code == 3
        err = capsys.readouterr().err
        assert "numerical failure" in err and "boundary" in err

    def test_unstabilized_sweep_is_three(self, tmp_path, capsys):
        code = run(tmp_path, "--command", "verify",
                   "--scenario", "linear_sink_2d",
                   "--set", "sweeps.h_degree=[0.1,0.03]")
        assert code == 3
        assert "inconclusive" in capsys.readouterr().err


class TestListScenarios:
    def test_sorted_bundled_names(self, capsys):
        assert main(["--list-scenarios"]) == 0
        names = capsys.readouterr().out.split()
        assert names == ["center_2d", "linear_sink_2d",
                         "orthant_contraction", "orthant_logistic",
                         "rotation_sink_2d", "saddle_2d"]


class TestArtifacts:
    def test_verify_writes_report_and_figure(self, tmp_path):
        assert run(tmp_path, "--command", "verify",
                   "--scenario", "linear_sink_2d", *FAST) == 0
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["passed"] is True
        csv = (tmp_path / "report.csv").read_text().splitlines()
        assert csv[0] == "t,h,alpha,index,residual,rhs_value,pass"
        assert len(csv) == 4
        assert (tmp_path / "report.png").stat().st_size > 1000

    def test_degree_artifacts(self, tmp_path, capsys):
        assert run(tmp_path, "--command", "degree",
                   "--scenario", "saddle_2d", "--seed", "1") == 0
        assert "saddle_2d: constrained degree -1" in capsys.readouterr().out
        cert = json.loads((tmp_path / "degree.json").read_text())
        assert cert["value"] == -1
        csv = (tmp_path / "degree.csv").read_text().splitlines()
        assert csv[0] == "param,value"
        assert len(csv) >= 4
        assert (tmp_path / "degree.png").stat().st_size > 1000

    def test_simulate_artifacts(self, tmp_path, capsys):
        assert run(tmp_path, "--command", "simulate",
                   "--scenario", "orthant_logistic") == 0
        out = capsys.readouterr().out
        assert "steps to t=1" in out
        lines = (tmp_path / "trajectory.csv").read_text().splitlines()
        assert lines[0].startswith("t,u_1,") and lines[0].endswith(",dist")
        assert len(lines) == 1002
        assert (tmp_path / "trajectory.png").stat().st_size > 1000

    def test_funnel_artifacts(self, tmp_path, capsys):
        assert run(tmp_path, "--command", "funnel",
                   "--scenario", "orthant_logistic") == 0
        assert "strategies, endpoint spread" in capsys.readouterr().out
        payload = json.loads((tmp_path / "funnel.json").read_text())
        assert payload["scenario"] == "orthant_logistic"
        assert set(payload["endpoints"]) == {"tangent_barycenter", "vertex_0",
                                             "vertex_1", "random_1"}
        csv = (tmp_path / "funnel.csv").read_text().splitlines()
        assert csv[0] == "strategy," + ",".join(f"u_{i+1}" for i in range(32))
        assert len(csv) == 5
        assert (tmp_path / "funnel.png").stat().st_size > 1000

    def test_scan_artifacts(self, tmp_path, capsys):
        assert run(tmp_path, "--command", "scan",
                   "--scenario", "linear_sink_2d", *FAST) == 0
        assert "all horizons excluded" in capsys.readouterr().out
        scan = json.loads((tmp_path / "scan.json").read_text())
        assert scan["flagged_t"] == []
        csv = (tmp_path / "scan.csv").read_text().splitlines()
        assert csv[0] == "t,z,floor,excluded"
        assert (tmp_path / "scan.png").stat().st_size > 1000


class TestDeterminism:
    def test_degree_outputs_are_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            out.mkdir()
            assert run(out, "--command", "degree",
                       "--scenario", "orthant_contraction") == 0
        assert (a / "degree.csv").read_bytes() == (b / "degree.csv").read_bytes()
        assert (a / "degree.json").read_bytes() == (b / "degree.json").read_bytes()


class TestScenarioFiles:
    def test_file_round_trip(self, tmp_path):
        cfg = bundled_config("orthant_contraction")
        text = serialize_config(cfg)
        assert parse_config(json.loads(text)) == cfg

    def test_custom_scenario_file_runs(self, tmp_path, capsys):
        cfg = bundled_config("orthant_contraction")
        path = tmp_path / "mine.json"
        path.write_text(serialize_config(cfg))
        code = run(tmp_path, "--command", "degree", "--scenario", str(path))
        assert code == 0
        assert "constrained degree 1" in capsys.readouterr().out
