import json

import pytest

from nonloclab.cli import main
from nonloclab.grid import load_field


def run_cli(args):
    return main(list(args))


class TestKernelChecks:
    def test_check_kernel_passes(self, tmp_path):
        out = tmp_path / "ck"
        assert run_cli(["check-kernel", "--n", "1", "--eps", "0.1", "--out", str(out)]) == 0
        summary = json.loads((out / "check_kernel_summary.json").read_text())
        assert summary["pass"] is True
        assert summary["second_moment_per_axis"] == pytest.approx(2.0, abs=1e-8)
        assert (out / "resolved_config.txt").exists()

    def test_check_kernel_2d(self, tmp_path):
        out = tmp_path / "ck2"
        assert run_cli(["check-kernel", "--n", "2", "--eps", "0.2", "--out", str(out)]) == 0

    def test_oracle_check(self, tmp_path):
        out = tmp_path / "oc"
        code = run_cli(["oracle-check", "--N", "128", "--eps", "0.15", "--out", str(out)])
        assert code == 0
        summary = json.loads((out / "oracle_check_summary.json").read_text())
        assert summary["quadratic_form_over_double_sum"] == pytest.approx(0.5, abs=1e-10)


class TestRateCommands:
    def test_operator_rate_outputs(self, tmp_path):
        out = tmp_path / "op"
        code = run_cli([
            "operator-rate", "--domain", "periodic", "--func", "sinmix",
            "--N", "512", "--eps", "0.2,0.1,0.05", "--out", str(out),
        ])
        assert code == 0
        assert (out / "operator_rate.csv").exists()
        assert (out / "operator_rate.svg").exists()
        summary = json.loads((out / "operator_rate_summary.json").read_text())
        assert summary["pass"] is True
        csv_lines = (out / "operator_rate.csv").read_text().splitlines()
        assert csv_lines[0] == "epsilon,error,included_in_fit"
        assert len(csv_lines) == 4

    def test_band_failure_exit_code(self, tmp_path):
        out = tmp_path / "fail"
        code = run_cli([
            "operator-rate", "--domain", "periodic", "--func", "sinmix",
            "--N", "512", "--eps", "0.2,0.1,0.05",
            "--slope-min", "5.0", "--out", str(out),
        ])
        assert code == 1

    def test_symbol_rate(self, tmp_path):
        out = tmp_path / "sym"
        assert run_cli(["symbol-rate", "--n", "1", "--eps", "0.2,0.1,0.05",
                        "--out", str(out)]) == 0

    def test_energy_rate(self, tmp_path):
        out = tmp_path / "en"
        assert run_cli(["energy-rate", "--N", "512", "--eps", "0.2,0.1,0.05",
                        "--out", str(out)]) == 0
        assert (out / "energy_rate.csv").exists()
        assert (out / "energy_rate.svg").exists()

    def test_remainder_rate(self, tmp_path):
        out = tmp_path / "rem"
        assert run_cli(["remainder-rate", "--N", "512", "--eps", "0.2,0.1,0.05",
                        "--out", str(out)]) == 0
        lines = (out / "remainder_rate.csv").read_text().splitlines()
        assert lines[0] == "epsilon,margin,value"


class TestSolveCommand:
    def test_trajectory_and_checkpoints(self, tmp_path):
        out = tmp_path / "solve"
        code = run_cli([
            "solve", "--eq", "nonlocal-ch", "--eps", "0.1",
            "--potential", "doublewell:K=1", "--T", "0.002", "--tau", "1e-5",
            "--N", "128", "--record-every", "100", "--checkpoints", "--out", str(out),
        ])
        assert code == 0
        lines = (out / "trajectory.csv").read_text().splitlines()
        assert lines[0] == "t,mass,energy"
        checkpoints = sorted(out.glob("state_t*.bin"))
        assert len(checkpoints) == len(lines) - 1
        field = load_field(checkpoints[0])
        assert field.grid.cells == (128,)

    def test_nonlocal_needs_eps(self, tmp_path, capsys):
        out = tmp_path / "ne"
        code = run_cli(["solve", "--eq", "nonlocal-ch", "--T", "0.001",
                        "--tau", "1e-5", "--N", "64", "--out", str(out)])
        assert code == 2

    def test_ac_solve(self, tmp_path):
        out = tmp_path / "ac"
        assert run_cli(["solve", "--eq", "local-ac", "--T", "0.01", "--tau", "1e-4",
                        "--N", "64", "--out", str(out)]) == 0


class TestUsageAndConfig:
    def test_unknown_command(self):
        assert run_cli(["frobnicate"]) == 2

    def test_bad_flag_value(self):
        assert run_cli(["check-kernel", "--n", "7"]) == 2

    def test_config_file_provides_defaults(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("# study setup\nN=512\neps=0.2,0.1,0.05\n")
        out = tmp_path / "cf"
        code = run_cli(["operator-rate", "--domain", "periodic", "--func", "sinmix",
                        "--config", str(cfg), "--out", str(out)])
        assert code == 0
        resolved = (out / "resolved_config.txt").read_text()
        assert "N=512" in resolved

    def test_flags_override_config(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("N=512\n")
        out = tmp_path / "ov"
        code = run_cli(["operator-rate", "--domain", "periodic", "--func", "sinmix",
                        "--eps", "0.2,0.1,0.05", "--config", str(cfg),
                        "--N", "256", "--out", str(out)])
        assert code == 0
        assert "N=256" in (out / "resolved_config.txt").read_text()

    def test_unknown_config_key(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("frobs=3\n")
        assert run_cli(["operator-rate", "--config", str(cfg)]) == 2

    def test_malformed_config_line(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("just a line without equals\n")
        assert run_cli(["operator-rate", "--config", str(cfg)]) == 2

    def test_missing_config_path(self):
        assert run_cli(["operator-rate", "--config"]) == 2

    def test_unresolvable_scale_is_usage_error(self, tmp_path):
        out = tmp_path / "bad"
        code = run_cli(["operator-rate", "--domain", "periodic", "--func", "sinmix",
                        "--N", "64", "--eps", "0.2,0.1,0.001", "--out", str(out)])
        assert code == 2


class TestReproducibility:
    def test_identical_config_byte_identical_outputs(self, tmp_path):
        args = ["solution-rate", "--N", "256", "--T", "0.005", "--tau", "5e-5",
                "--record-every", "10", "--eps", "0.16,0.08,0.04"]
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert run_cli(args + ["--out", str(out1)]) == 0
        assert run_cli(args + ["--out", str(out2)]) == 0
        for name in ("solution_rate_hminus1_sup.csv", "solution_rate_hminus1_sup_summary.json",
                     "solution_rate_hminus1_sup.svg"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_gronwall_command(self, tmp_path):
        out = tmp_path / "gw"
        code = run_cli(["gronwall", "--N", "256", "--T", "0.005", "--tau", "5e-5",
                        "--record-every", "10", "--eps", "0.16,0.08,0.04",
                        "--out", str(out)])
        assert code == 0
        lines = (out / "gronwall_trace.csv").read_text().splitlines()
        assert lines[0].startswith("t,dual_sq_half,derivative")
        summary = json.loads((out / "gronwall_summary.json").read_text())
        assert summary["pass"] is True
