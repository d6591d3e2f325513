"""Tests for the command-line driver."""

import io

import numpy as np
import pytest

from dln_nse.cli import (
    ConfigError,
    RunConfig,
    main,
    parse_config_text,
    parse_forcing,
    parse_grid,
    read_ledger,
    resolve_config,
)
from dln_nse.stepper import LEDGER_COLUMNS


@pytest.fixture
def root(tmp_path, monkeypatch):
    monkeypatch.setenv("DLN_NSE_OUTPUT_ROOT", str(tmp_path))
    return tmp_path


def run(*argv):
    buf = io.StringIO()
    code = main(list(argv), out=buf)
    return code, dict(
        line.split(" = ", 1) for line in buf.getvalue().splitlines() if " = " in line
    )


class TestParsing:
    def test_grid(self):
        g = parse_grid("0.05:0.95:0.05")
        assert len(g) == 19 and g[0] == 0.05 and g[-1] == 0.95
        assert parse_grid("0.2, 0.5") == [0.2, 0.5]
        with pytest.raises(ConfigError):
            parse_grid("a:b:c")

    def test_forcing(self):
        assert parse_forcing("1,2,0.5;3,1,0.25,1.0") == ((1, 2, 0.5, 0.0), (3, 1, 0.25, 1.0))
        assert parse_forcing("") == ()
        with pytest.raises(ConfigError):
            parse_forcing("1,2")

    def test_config_text(self):
        vals = parse_config_text("# comment\ntheta = 0.3\nallow-inadmissible = yes\ndt = none\n")
        assert vals == {"theta": 0.3, "allow_inadmissible": True, "dt": None}
        with pytest.raises(ConfigError):
            parse_config_text("theta 0.3")
        with pytest.raises(ConfigError):
            parse_config_text("bogus = 1")
        with pytest.raises(ConfigError):
            parse_config_text("steps = many")

    def test_precedence(self, tmp_path):
        f = tmp_path / "run.cfg"
        f.write_text("preset = forced\nsteps = 7\nnu = 0.3\n")
        cfg = resolve_config("simulate", str(f), {"nu": "0.2"})
        assert cfg.steps == 7  # file beats preset
        assert cfg.nu == 0.2  # command line beats file
        assert cfg.n == 64  # preset beats default
        assert RunConfig().n == 64 and RunConfig().solver == "auto"

    def test_unknown_preset(self):
        with pytest.raises(ConfigError):
            resolve_config("simulate", None, {"preset": "nope"})


class TestCoeffsAndCertify:
    def test_coeffs(self, root):
        code, out = run("coeffs", "--theta", "0.5", "--output", "c")
        assert code == 0
        assert float(out["a1"]) == pytest.approx(-0.4330127, abs=1e-7)
        assert float(out["C_dt_factor"]) == pytest.approx(48 / 107)
        lines = (root / "c" / "coeffs.csv").read_text().splitlines()
        assert len(lines) == 2 and lines[0].startswith("theta,alpha0")

    def test_certify_pass(self, root):
        code, out = run("certify", "--theta", "0.5", "--nu", "1", "--lambda1", "1",
                        "--dt", "0.2", "--output", "cert")
        assert code == 0 and out["result"] == "PASS"
        assert float(out["h11"]) == pytest.approx(0.33818106411341817, rel=1e-13)
        assert (root / "cert" / "certificate.txt").exists()
        assert (root / "cert" / "certificate.csv").exists()

    def test_certify_inadmissible(self, root, capsys):
        code, _ = run("certify", "--theta", "0.5", "--dt", "0.5")
        assert code == 2
        assert "0.448598" in capsys.readouterr().err

    def test_certify_needs_dt(self, root):
        assert run("certify")[0] == 2

    def test_sweep(self, root):
        code, out = run("sweep", "--theta-grid", "0.05:0.95:0.05", "--dt-frac", "0.99",
                        "--output", "sw")
        assert code == 0 and out["points"] == "19" and out["failures"] == "0"
        lines = (root / "sw" / "sweep.csv").read_text().splitlines()
        header = lines[0].split(",")
        assert len(lines) == 20
        col = header.index("all_pass")
        assert all(ln.split(",")[col] == "True" for ln in lines[1:])

    def test_sweep_bad_fraction(self, root):
        assert run("sweep", "--dt-fracs", "0.5,1.2")[0] == 2


class TestSimulate:
    ARGS = ("simulate", "--theta", "0.4", "--nu", "0.1", "--dt-frac", "0.5", "--n", "16",
            "--steps", "40", "--forcing", "1,2,0.05,0.3", "--ic-norm", "0.5")

    def test_ledger_round_trip(self, root):
        code, out = run(*self.ARGS, "--output", "s")
        assert code == 0 and out["all_pass"] == "True"
        header, data, cols = read_ledger(root / "s" / "ledger.csv")
        assert tuple(cols) == LEDGER_COLUMNS
        assert data.shape == (40, len(LEDGER_COLUMNS))
        assert header["config.theta"] == "0.40000000000000002"
        np.testing.assert_array_equal(data[:, 0], np.arange(2, 42))
        assert (root / "s" / "manifest.txt").exists()
        assert (root / "s" / "spectrum.csv").exists()

    def test_byte_identical(self, root):
        names = ("ledger.csv", "manifest.txt", "spectrum.csv")
        run(*self.ARGS, "--output", "a")
        first = [(root / "a" / n).read_bytes() for n in names]
        run(*self.ARGS, "--output", "a")
        assert first == [(root / "a" / n).read_bytes() for n in names]

    def test_zero_steps(self, root):
        code, _ = run(*self.ARGS, "--steps", "0", "--output", "z")
        assert code == 0
        header, data, cols = read_ledger(root / "z" / "ledger.csv")
        assert data.shape == (0, len(LEDGER_COLUMNS)) and "K2" in header

    def test_snapshots(self, root):
        run(*self.ARGS, "--steps", "4", "--snapshot-every", "2", "--output", "snap")
        names = sorted(p.name for p in (root / "snap" / "snapshots").iterdir())
        assert names == ["u_0000000.bin", "u_0000002.bin", "u_0000004.bin"]

    def test_unforced_preset(self, root):
        code, out = run("simulate", "--preset", "unforced-decay", "--steps", "200",
                        "--n", "16", "--output", "u")
        assert code == 0
        _, data, cols = read_ledger(root / "u" / "ledger.csv")
        g = data[:, cols.index("g_norm_sq")]
        assert np.all(np.diff(g) <= 1e-12 * g[0])

    def test_two_ic(self, root):
        code, out = run("simulate", "--preset", "two-ic", "--steps", "60", "--output", "t")
        assert code == 0 and out["all_pass"] == "True"
        ratio = float(out["ic_b.norm_u0"]) / float(out["ic_a.norm_u0"])
        assert ratio == pytest.approx(100.0, rel=1e-12)
        assert (root / "t" / "ic_a" / "ledger.csv").exists()
        assert (root / "t" / "report.txt").exists()

    def test_inadmissible_and_diagnostic(self, root):
        assert run("simulate", "--dt", "10", "--n", "16", "--steps", "2")[0] == 2
        code, out = run("simulate", "--dt", "10", "--nu", "1", "--n", "16", "--steps", "2",
                        "--ic-norm", "1e-3", "--allow-inadmissible", "--output", "d")
        assert code in (0, 1, 3)
        assert (root / "d" / "manifest.txt").exists()


class TestOtherCommands:
    def test_convergence(self, root):
        code, out = run("convergence", "--thetas", "0.5", "--halvings", "2", "--n", "16",
                        "--t-final", "0.4", "--output", "cv")
        assert code == 0 and out["result"] == "PASS"
        lines = (root / "cv" / "convergence.csv").read_text().splitlines()
        assert lines[0] == "theta,dt,error,order"
        assert lines[1].endswith(",") and len(lines) == 4

    def test_convergence_single_dt(self, root):
        code, _ = run("convergence", "--thetas", "0.5", "--halvings", "0", "--n", "16",
                      "--t-final", "0.2", "--output", "cv1")
        assert code == 0
        lines = (root / "cv1" / "convergence.csv").read_text().splitlines()
        assert len(lines) == 2 and lines[1].split(",")[3] == ""

    def test_gronwall_check(self, root):
        code, out = run("gronwall-check", "--instances", "50", "--seed", "3", "--output", "g")
        assert code == 0 and out["violations_finite"] == "0" and out["violations_uniform"] == "0"
        assert len((root / "g" / "gronwall.csv").read_text().splitlines()) == 51

    def test_config_file_and_set(self, root, tmp_path):
        f = tmp_path / "c.cfg"
        f.write_text("theta = 0.3\ndt = 0.05\n")
        code, out = run("certify", "--config", str(f), "--set", "theta=0.6", "--output", "k")
        assert code == 0 and float(out["theta"]) == pytest.approx(0.6)

    def test_bad_config(self, root, tmp_path):
        f = tmp_path / "bad.cfg"
        f.write_text("not a config line\n")
        assert run("certify", "--config", str(f))[0] == 2
        assert run("certify", "--set", "theta")[0] == 2
        assert run("certify", "--config", str(tmp_path / "missing.cfg"))[0] == 2
