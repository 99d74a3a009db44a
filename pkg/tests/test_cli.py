"""Experiment runner: config validation, exit codes, artifacts, determinism.

Contract examples run through a real subprocess so exit codes and stderr
reach the same path a user sees; the per-experiment glue is exercised
in-process on coarse grids to keep the suite quick.
"""

import json
import math
import subprocess
import sys

import pytest

from coulomblab.cli import EXPERIMENT_NAMES, parse_config, run, validate

H2P_LINES = "nucleus = 1836.15267, 1\nnucleus = 1836.15267, 1\nelectrons = 1\n"


def write_cfg(path, body):
    path.write_text(body, encoding="utf-8")
    return str(path)


def lab(*args, env=None):
    return subprocess.run(
        [sys.executable, "-m", "coulomblab.cli", *args],
        capture_output=True,
        text=True,
        env=env,
    )


class TestConfigParsing:
    def test_comments_and_blanks(self):
        cfg = parse_config("# header\n\nexperiment = curve  # trailing\nelectrons = 1\n")
        assert cfg == {"experiment": "curve", "electrons": "1"}

    def test_nucleus_repeats(self):
        cfg = parse_config("nucleus = 1836,1\nnucleus = INFINITE,1\n")
        assert cfg["nucleus"] == ["1836,1", "INFINITE,1"]

    def test_duplicate_key_rejected(self, tmp_path):
        path = write_cfg(tmp_path / "d.cfg", "experiment = curve\nexperiment = kato\n")
        diags = validate(path)
        assert len(diags) == 1
        assert "duplicate key" in diags[0]

    def test_missing_equals_rejected(self, tmp_path):
        path = write_cfg(tmp_path / "d.cfg", "experiment curve\n")
        diags = validate(path)
        assert "expected 'key = value'" in diags[0]


class TestValidate:
    def test_valid_config_empty_list(self, tmp_path):
        path = write_cfg(
            tmp_path / "ok.cfg", f"experiment = kato\n{H2P_LINES}"
        )
        assert validate(path) == []

    def test_unreadable_file_single_diagnostic(self, tmp_path):
        diags = validate(tmp_path / "missing.cfg")
        assert len(diags) == 1
        assert "cannot read config" in diags[0]

    def test_unknown_experiment_lists_allowed(self, tmp_path):
        path = write_cfg(tmp_path / "x.cfg", "experiment = orbit\nelectrons = 1\n")
        diags = validate(path)
        assert any("unknown experiment" in d for d in diags)
        joined = " ".join(diags)
        for name in EXPERIMENT_NAMES:
            assert name in joined

    def test_missing_electrons_named(self, tmp_path):
        path = write_cfg(tmp_path / "x.cfg", "experiment = curve\n")
        assert "missing 'electrons' key" in validate(path)

    def test_sigma_order_diagnostic(self, tmp_path):
        path = write_cfg(
            tmp_path / "w.cfg",
            f"experiment = weyl\n{H2P_LINES}b = 3.0\nsigmas = 0.02, 0.05, 0.12\n",
        )
        assert "sigmaList must be descending" in validate(path)

    def test_system_path_resolved_at_validation(self, tmp_path):
        path = write_cfg(
            tmp_path / "s.cfg", "experiment = curve\nsystem = nowhere.sys\n"
        )
        assert any("system file not found" in d for d in validate(path))

    def test_system_path_relative_to_config(self, tmp_path):
        (tmp_path / "ion.sys").write_text(H2P_LINES, encoding="utf-8")
        path = write_cfg(
            tmp_path / "s.cfg", "experiment = kato\nsystem = ion.sys\n"
        )
        assert validate(path) == []

    def test_massscan_requirements(self, tmp_path):
        path = write_cfg(tmp_path / "m.cfg", f"experiment = massscan\n{H2P_LINES}")
        diags = validate(path)
        assert any("lambdas" in d for d in diags)
        assert any("mode must be ATOMIC or MOLECULAR" in d for d in diags)

    def test_unknown_key_flagged(self, tmp_path):
        path = write_cfg(
            tmp_path / "k.cfg", f"experiment = kato\n{H2P_LINES}flavor = up\n"
        )
        assert any("unknown key 'flavor'" in d for d in diags_or(validate(path)))

    def test_negative_seed_flagged(self, tmp_path):
        path = write_cfg(
            tmp_path / "k.cfg", f"experiment = kato\n{H2P_LINES}seed = -3\n"
        )
        assert any("seed" in d for d in validate(path))


def diags_or(diags):
    return diags or [""]


class TestSubprocessContract:
    def test_curve_example(self, tmp_path):
        cfg = write_cfg(
            tmp_path / "curve.cfg",
            f"experiment = curve\n{H2P_LINES}"
            "r_min = 0.5\nr_max = 10.0\nr_step = 0.1\n",
        )
        out = tmp_path / "out"
        proc = lab("run", cfg, "--out", str(out))
        assert proc.returncode == 0, proc.stderr
        lines = (out / "results.csv").read_text().splitlines()
        assert lines[0] == "r,E0,E1"
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["summary"]["V0"] == pytest.approx(-0.6026, abs=2e-3)
        assert manifest["summary"]["r_min"] == pytest.approx(2.0, abs=0.05)
        assert manifest["config"]["seed"] == 0
        assert manifest["config"]["system"]["electrons"] == 1

    def test_missing_electrons_exit_2(self, tmp_path):
        cfg = write_cfg(tmp_path / "bad.cfg", "experiment = curve\n")
        proc = lab("run", cfg)
        assert proc.returncode == 2
        assert "'electrons'" in proc.stderr

    def test_validate_exit_codes(self, tmp_path):
        good = write_cfg(tmp_path / "ok.cfg", f"experiment = kato\n{H2P_LINES}")
        bad = write_cfg(tmp_path / "no.cfg", "experiment = orbit\nelectrons = 1\n")
        ok = lab("validate", good)
        assert ok.returncode == 0 and ok.stderr.strip() == ""
        fail = lab("validate", bad)
        assert fail.returncode == 2 and "unknown experiment" in fail.stderr

    def test_massscan_molecular_infinite_row(self, tmp_path):
        cfg = write_cfg(
            tmp_path / "scan.cfg",
            f"experiment = massscan\n{H2P_LINES}"
            "mode = MOLECULAR\nlambdas = 1, 4, 16, INFINITE\n"
            "r_min = 0.5\nr_max = 8.0\nr_step = 0.2\n",
        )
        out = tmp_path / "out"
        proc = lab("run", cfg, "--out", str(out))
        assert proc.returncode == 0, proc.stderr
        lines = (out / "results.csv").read_text().splitlines()
        assert lines[0] == "lambda,E0,E1,spacing,status"
        assert lines[-1].startswith("INFINITE,NAN,NAN,NAN,")
        assert "NON_SELF_ADJOINT_RISK" in lines[-1]
        manifest = json.loads((out / "manifest.json").read_text())
        assert "INFINITE" in manifest["config"]["lambdas"]

    def test_nonconvergence_exit_3(self, tmp_path):
        # at tiny mass scale the rescaled well holds fewer than two levels
        cfg = write_cfg(
            tmp_path / "scan.cfg",
            f"experiment = massscan\n{H2P_LINES}"
            "mode = MOLECULAR\nlambdas = 0.005, 0.01, 0.02\n"
            "r_min = 0.5\nr_max = 8.0\nr_step = 0.2\n",
        )
        proc = lab("run", cfg, "--out", str(tmp_path / "out"))
        assert proc.returncode == 3
        assert "did not converge" in proc.stderr

    def test_io_failure_exit_4(self, tmp_path):
        blocker = tmp_path / "blocker"
        blocker.write_text("not a directory", encoding="utf-8")
        cfg = write_cfg(tmp_path / "k.cfg", f"experiment = kato\n{H2P_LINES}")
        proc = lab("run", cfg, "--out", str(blocker / "sub"))
        assert proc.returncode == 4
        assert "I/O failure" in proc.stderr

    def test_lab_out_env_default(self, tmp_path):
        import os

        cfg = write_cfg(tmp_path / "k.cfg", f"experiment = kato\n{H2P_LINES}")
        env = dict(os.environ)
        env["LAB_OUT"] = str(tmp_path / "from_env")
        proc = lab("run", cfg, env=env)
        assert proc.returncode == 0, proc.stderr
        assert (tmp_path / "from_env" / "results.csv").is_file()

    def test_seed_and_threads_recorded(self, tmp_path):
        cfg = write_cfg(tmp_path / "k.cfg", f"experiment = kato\n{H2P_LINES}")
        out = tmp_path / "out"
        proc = lab("run", cfg, "--out", str(out), "--seed", "7", "--threads", "3")
        assert proc.returncode == 0, proc.stderr
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["seed"] == 7
        assert manifest["config"]["threads"] == 3

    def test_threads_do_not_change_bytes(self, tmp_path):
        cfg = write_cfg(
            tmp_path / "n.cfg",
            f"experiment = nonadiabatic\n{H2P_LINES}"
            "size = 10\ncandidates = 16\nrefine_sweeps = 4\n",
        )
        a, b = tmp_path / "a", tmp_path / "b"
        pa = lab("run", cfg, "--out", str(a), "--seed", "11", "--threads", "1")
        pb = lab("run", cfg, "--out", str(b), "--seed", "11", "--threads", "4")
        assert pa.returncode == 0 and pb.returncode == 0, pa.stderr + pb.stderr
        assert (a / "results.csv").read_bytes() == (b / "results.csv").read_bytes()

    def test_seed_changes_results(self, tmp_path):
        cfg = write_cfg(
            tmp_path / "n.cfg",
            f"experiment = nonadiabatic\n{H2P_LINES}"
            "size = 10\ncandidates = 16\nrefine_sweeps = 4\n",
        )
        a, b = tmp_path / "a", tmp_path / "b"
        pa = lab("run", cfg, "--out", str(a), "--seed", "11")
        pb = lab("run", cfg, "--out", str(b), "--seed", "12")
        assert pa.returncode == 0 and pb.returncode == 0
        assert (a / "results.csv").read_bytes() != (b / "results.csv").read_bytes()


class TestInProcessRunners:
    """One cheap pass through each runner's glue on coarse grids."""

    def test_levels(self, tmp_path, capsys):
        cfg = write_cfg(
            tmp_path / "l.cfg",
            f"experiment = levels\n{H2P_LINES}"
            "r_min = 0.5\nr_max = 8.0\nr_step = 0.1\nn_levels = 2\n",
        )
        assert run(cfg, out=str(tmp_path / "out")) == 0
        manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
        assert 0.009 < manifest["summary"]["omega"] < 0.012
        lines = (tmp_path / "out" / "results.csv").read_text().splitlines()
        assert lines[0] == "v,energy"
        assert len(lines) == 3

    def test_coupled(self, tmp_path, capsys):
        cfg = write_cfg(
            tmp_path / "c.cfg",
            f"experiment = coupled\n{H2P_LINES}"
            "r_min = 0.8\nr_max = 4.0\nr_step = 0.2\nchannels = 0,1\nn_levels = 1\n",
        )
        assert run(cfg, out=str(tmp_path / "out")) == 0
        manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
        weights = manifest["summary"]["ground_weights"]
        assert weights[0] > 0.99  # ground channel dominates

    def test_weyl(self, tmp_path, capsys):
        cfg = write_cfg(
            tmp_path / "w.cfg",
            f"experiment = weyl\n{H2P_LINES}"
            "r_min = 0.5\nr_max = 6.0\nr_step = 0.1\nb = 3.0\n",
        )
        assert run(cfg, out=str(tmp_path / "out")) == 0
        manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
        assert abs(manifest["summary"]["fitted_variance_exponent"] - 2.0) <= 0.2
        lines = (tmp_path / "out" / "results.csv").read_text().splitlines()
        assert lines[0] == "sigma,mean,variance"

    def test_collapse_h_elec(self, tmp_path, capsys):
        cfg = write_cfg(
            tmp_path / "c.cfg",
            "experiment = collapse\n"
            "nucleus = INFINITE, 1\nnucleus = INFINITE, 1\nelectrons = 1\n"
            "r_min = 0.5\nr_max = 8.0\nr_step = 0.1\n"
            "mode = H_ELEC\nsigma_min = 0.003\nsigma_max = 0.8\nsigma_count = 12\n",
        )
        assert run(cfg, out=str(tmp_path / "out")) == 0
        manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
        assert manifest["summary"]["interior_minimum_found"] is False
        assert manifest["summary"]["status"] == "NON_SELF_ADJOINT_RISK"
        lines = (tmp_path / "out" / "results.csv").read_text().splitlines()
        assert lines[0] == "sigma,energy,dE_dsigma"

    def test_cover(self, tmp_path, capsys):
        cfg = write_cfg(
            tmp_path / "c.cfg",
            f"experiment = cover\n{H2P_LINES}"
            "r_min = 0.5\nr_max = 8.0\nr_step = 0.1\nenergy = -0.55\n",
        )
        assert run(cfg, out=str(tmp_path / "out")) == 0
        manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
        assert manifest["summary"]["count"] == 2

    def test_kato_coalescence(self, tmp_path, capsys):
        cfg = write_cfg(
            tmp_path / "k.cfg",
            "experiment = kato\n"
            "nucleus = INFINITE, 1\nnucleus = INFINITE, 1\nelectrons = 1\n"
            "width_max = 0.5\nwidth_min = 0.005\nwidth_count = 13\n",
        )
        assert run(cfg, out=str(tmp_path / "out")) == 0
        manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
        assert manifest["summary"]["divergent"] is True
        assert manifest["summary"]["tail_growth"] > 5.0

    def test_run_on_invalid_returns_2(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path / "bad.cfg", "experiment = curve\n")
        assert run(cfg) == 2
