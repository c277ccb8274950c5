"""Command-line front-end tests: config parsing strictness, output formats,
determinism of written files, and the exit-code contract."""

import json
from pathlib import Path

import numpy as np
import pytest

from annuflux import cli

BASE_CONFIG = """\
# reference channel, SI units
geometry.d0 = 10e-6
geometry.D0 = 100e-6
geometry.r0 = 20e-6
geometry.D  = 80e-12
truncation.t_min = 0.1
truncation.tol   = 1e-8
mc.n_particles = 1500
mc.dt    = 1e-3
mc.t_max = 15
mc.seed  = 11
mc.bin_width = 1.0
"""


@pytest.fixture()
def config_path(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(BASE_CONFIG)
    return str(path)


def run(*argv):
    return cli.main(list(argv))


class TestConfigParsing:
    def test_round_trip(self, config_path):
        cfg = cli.parse_config(config_path)
        assert cfg.geom.d0 == pytest.approx(10e-6)
        assert cfg.mc_config().n_particles == 1500

    def test_unknown_key_rejected(self, tmp_path):
        bad = tmp_path / "bad.cfg"
        bad.write_text("geometry.d0 = 1e-6\ngeometry.radius = 2e-6\n")
        with pytest.raises(cli.ConfigError, match="unknown key"):
            cli.parse_config(str(bad))

    def test_unit_suffix_rejected(self, tmp_path):
        bad = tmp_path / "bad.cfg"
        bad.write_text("geometry.d0 = 10e-6 m\n")
        with pytest.raises(cli.ConfigError, match="unit"):
            cli.parse_config(str(bad))

    def test_duplicate_key_rejected(self, tmp_path):
        bad = tmp_path / "bad.cfg"
        bad.write_text("geometry.d0 = 1e-6\ngeometry.d0 = 2e-6\n")
        with pytest.raises(cli.ConfigError, match="duplicate"):
            cli.parse_config(str(bad))

    def test_seed_override(self, config_path):
        cfg = cli.parse_config(config_path)
        assert cfg.mc_config(99).seed == 99


class TestExitCodes:
    def test_missing_config_is_config_error(self, tmp_path, capsys):
        assert run("--out", str(tmp_path), "impulse", "--t-start", "1", "--t-stop", "2") == 2

    def test_bad_geometry_is_physics_error(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text(BASE_CONFIG.replace("geometry.r0 = 20e-6", "geometry.r0 = 5e-6"))
        code = run("--config", str(cfg), "--out", str(tmp_path), "impulse",
                   "--t-start", "0.1", "--t-stop", "10")
        assert code == 3

    def test_unreachable_truncation_is_numerical_error(self, tmp_path):
        cfg = tmp_path / "deep.cfg"
        cfg.write_text(BASE_CONFIG.replace("truncation.t_min = 0.1", "truncation.t_min = 1e-5"))
        code = run("--config", str(cfg), "--out", str(tmp_path), "impulse",
                   "--t-start", "0.1", "--t-stop", "10")
        assert code == 4

    def test_compare_pass_fail_and_exit_code(self, tmp_path):
        cfg = tmp_path / "cmp.cfg"
        cfg.write_text(BASE_CONFIG.replace("mc.n_particles = 1500", "mc.n_particles = 6000"))
        good = tmp_path / "good"
        code = run("--config", str(cfg), "--out", str(good), "compare", "--threshold", "0.10")
        report = json.loads((good / "compare.json").read_text())
        assert code == 0 and report["passed"]
        # statistically unreachable threshold exercises the failure exit code
        tight = tmp_path / "tight"
        code = run("--config", str(cfg), "--out", str(tight), "compare", "--threshold", "0.001")
        assert code == 5
        assert not json.loads((tight / "compare.json").read_text())["passed"]

    def test_compare_negative_control_wrong_geometry(self, config_path):
        # score hits from one channel against a different release radius
        from annuflux import analytic, mcsim
        base = cli.parse_config(config_path)
        true_geom = base.geom
        wrong_geom = type(true_geom)(true_geom.d0, true_geom.D0, 60e-6, true_geom.D)
        ms = analytic.certified_modeset(wrong_geom, 0.1, 1e-8)
        result = mcsim.simulate_2d(true_geom, base.mc_config())
        report = cli.compare_runs(wrong_geom, ms, result, 1.0)
        assert report["max_rate_deviation_over_peak"] > 0.10


class TestEigenCommand:
    def test_corner_single_mode(self, tmp_path):
        assert run("--out", str(tmp_path), "eigen", "--alpha", "0.1",
                   "--orders", "1", "--roots", "1") == 0
        lines = (tmp_path / "eigentable.csv").read_text().splitlines()
        assert lines[0] == "m,n,beta,c,norm"
        m, n, beta, _, _ = lines[1].split(",")
        assert (m, n) == ("0", "1")
        assert float(beta) == pytest.approx(1.103, abs=5e-4)

    def test_rerun_is_byte_identical(self, tmp_path):
        a_dir, b_dir = tmp_path / "a", tmp_path / "b"
        for out in (a_dir, b_dir):
            assert run("--out", str(out), "eigen", "--alpha", "0.25",
                       "--orders", "3", "--roots", "2", "--table-grid") == 0
        assert (a_dir / "eigentable.csv").read_bytes() == (b_dir / "eigentable.csv").read_bytes()
        assert (a_dir / "eigentable_grid.txt").read_bytes() == (b_dir / "eigentable_grid.txt").read_bytes()


class TestImpulseCommand:
    def test_csv_with_metadata_sidecar(self, config_path, tmp_path):
        out = tmp_path / "out"
        assert run("--config", config_path, "--out", str(out), "impulse",
                   "--t-start", "0.1", "--t-stop", "40", "--t-count", "30", "--t-log") == 0
        lines = (out / "impulse.csv").read_text().splitlines()
        assert lines[0] == "t,rate,cumulative"
        assert len(lines) == 31
        meta = json.loads((out / "impulse.meta.json").read_text())
        assert meta["source"] == "series"
        assert "modeset_hash" in meta and "truncation" in meta

    def test_json_format(self, config_path, tmp_path):
        out = tmp_path / "json_out"
        assert run("--config", config_path, "--out", str(out), "--format", "json",
                   "impulse", "--t-start", "0.1", "--t-stop", "10", "--t-count", "5") == 0
        payload = json.loads((out / "impulse.json").read_text())
        assert len(payload["rate"]) == 5

    def test_full_window_flag_matches_plain(self, config_path, tmp_path):
        plain, full = tmp_path / "p", tmp_path / "f"
        for out, extra in ((plain, []), (full, ["--theta-f", str(np.pi)])):
            assert run("--config", config_path, "--out", str(out), "impulse",
                       "--t-start", "0.1", "--t-stop", "20", "--t-count", "10", *extra) == 0
        assert (plain / "impulse.csv").read_text() == (full / "impulse.csv").read_text()

    def test_cumulative_tends_to_one_on_long_grid(self, config_path, tmp_path):
        out = tmp_path / "long"
        assert run("--config", config_path, "--out", str(out), "impulse",
                   "--t-start", "0.1", "--t-stop", "3000", "--t-count", "40", "--t-log") == 0
        last = (out / "impulse.csv").read_text().splitlines()[-1]
        assert float(last.split(",")[2]) == pytest.approx(1.0, abs=1e-6)


class TestSimulateCommand:
    def test_outputs_and_determinism(self, config_path, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out, threads in ((a, "1"), (b, "2")):
            assert run("--config", config_path, "--threads", threads, "--out", str(out),
                       "simulate") == 0
        assert (a / "hits.csv").read_bytes() == (b / "hits.csv").read_bytes()
        meta = json.loads((a / "run_meta.json").read_text())
        assert meta["hits"] + meta["survivors"] == 1500
        emp = (a / "empirical.csv").read_text().splitlines()
        assert emp[0] == "t,rate,cumulative"

    def test_zero_particles_valid(self, tmp_path, config_path):
        cfg = Path(config_path)
        cfg.write_text(cfg.read_text().replace("mc.n_particles = 1500", "mc.n_particles = 0"))
        out = tmp_path / "empty"
        assert run("--config", str(cfg), "--out", str(out), "simulate") == 0
        assert len((out / "hits.csv").read_text().splitlines()) == 1

    def test_seed_flag_changes_output(self, config_path, tmp_path):
        a, b = tmp_path / "s1", tmp_path / "s2"
        assert run("--config", config_path, "--seed", "1", "--out", str(a), "simulate") == 0
        assert run("--config", config_path, "--seed", "2", "--out", str(b), "simulate") == 0
        assert (a / "hits.csv").read_bytes() != (b / "hits.csv").read_bytes()


class TestCharacteristicsCommand:
    def test_single_point(self, config_path, tmp_path):
        out = tmp_path / "c"
        assert run("--config", config_path, "--out", str(out), "characteristics") == 0
        lines = (out / "sweep.csv").read_text().splitlines()
        assert lines[0] == "alpha,r0,tau_peak,tau_average,tau_half"
        assert len(lines) == 2
        meta = json.loads((out / "sweep_meta.json").read_text())
        assert meta["points"][0]["error"] is None

    def test_small_grid_with_slopes(self, config_path, tmp_path):
        out = tmp_path / "grid"
        assert run("--config", config_path, "--out", str(out), "characteristics",
                   "--r0-grid", "12e-6:90e-6:6:log") == 0
        lines = (out / "sweep.csv").read_text().splitlines()
        assert len(lines) == 7
        meta = json.loads((out / "sweep_meta.json").read_text())
        assert "0.1" in meta["slopes"]
