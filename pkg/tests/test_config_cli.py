import csv
import subprocess
import sys
from pathlib import Path

import pytest

from fmm_pricing.cli import CONVERGE_COLUMNS, CROSS_COLUMNS, REPORT_COLUMNS, main
from fmm_pricing.config import ConfigError, StrikeSpec, parse_config, parse_config_text, serialize_config

ROOT = Path(__file__).resolve().parents[1]
TABLE1 = ROOT / "configs" / "table1.ini"

SMALL = """\
[market]
tenor =
    0.25  0.010  0.20
    0.50  0.013  0.15
    0.75  0.014  0.25
correlation = 0.5

[product]
a = 1
b = 2
strikes = x1.1 atm x0.9

[mc]
paths = 20000
steps = 10
seed = 12345

[pde]
resolution = 16
dt = 2L

[converge]
resolutions = 8 16
reference = 32
"""


@pytest.fixture
def small(tmp_path):
    p = tmp_path / "small.ini"
    p.write_text(SMALL)
    return p


class TestParse:
    def test_table1(self):
        cfg = parse_config(TABLE1)
        md = cfg.market_data()
        assert md.n_rates == 5
        assert list(md.vols) == [0.2, 0.15, 0.25, 0.26, 0.27]
        assert md.correlation[0, 1] == 0.5
        specs = cfg.specs()
        assert [s.strike for s in specs] == pytest.approx([0.013 * m for m in (1.2, 1.1, 1.0, 0.9, 0.8)])
        assert cfg.mc.num_paths == 10**6 and cfg.mc.seed == 12345
        assert cfg.pde.resolution == (512,) and cfg.pde.dt_exponent == 10
        assert cfg.converge.reference == 1024

    def test_canary(self):
        cfg = parse_config(ROOT / "configs" / "canary.ini")
        assert all(s.exercise_dates == (1, 2, 3) for s in cfg.specs())

    def test_dates_out_of_order_names_line(self):
        text = SMALL.replace("    0.50  0.013  0.15", "    0.20  0.013  0.15")
        with pytest.raises(ConfigError, match=r"<config>:4: \[market\] tenor: row 2"):
            parse_config_text(text)

    def test_bad_correlation(self):
        with pytest.raises(ConfigError, match="correlation"):
            parse_config_text(SMALL.replace("correlation = 0.5", "correlation = 1.5"))

    def test_matrix_correlation(self):
        text = SMALL.replace("correlation = 0.5", "correlation =\n    1 0.3 0.2\n    0.3 1 0.4\n    0.2 0.4 1")
        md = parse_config_text(text).market_data()
        assert md.correlation[1, 2] == 0.4
        with pytest.raises(ConfigError, match="3x3"):
            parse_config_text(text.replace("    0.2 0.4 1", ""))

    @pytest.mark.parametrize(
        "old,new,match",
        [
            ("b = 2", "b = 7", "0 < a < b"),
            ("paths = 20000", "paths = 1", r"\[mc\]"),
            ("resolution = 16", "resolution = 1", r"\[pde\]"),
            ("dt = 2L", "dt = fast", r"\[pde\] dt"),
            ("strikes = x1.1 atm x0.9", "strikes = x-1", "strikes"),
            ("[product]", "[prod]", "product"),
        ],
    )
    def test_errors(self, old, new, match):
        with pytest.raises(ConfigError, match=match):
            parse_config_text(SMALL.replace(old, new))

    def test_round_trip(self):
        for path in (TABLE1, ROOT / "configs" / "canary.ini"):
            cfg = parse_config(path)
            again = parse_config_text(serialize_config(cfg))
            assert again == cfg
        cfg = parse_config_text(SMALL)
        assert parse_config_text(serialize_config(cfg)) == cfg

    def test_strike_spec(self):
        assert StrikeSpec.parse("atm") == StrikeSpec(1.0, True)
        assert StrikeSpec.parse("0.012").resolve(0.5) == 0.012
        assert StrikeSpec.parse("x1.1").resolve(0.01) == pytest.approx(0.011)
        assert StrikeSpec.parse(str(StrikeSpec.parse("x1.1"))) == StrikeSpec.parse("x1.1")


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestCli:
    def test_price_pde_csv_stable(self, small, tmp_path, capsys):
        out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
        assert main(["price-pde", "--config", str(small), "--quiet", "--csv", str(out1)]) == 0
        assert main(["price-pde", "--config", str(small), "--quiet", "--csv", str(out2)]) == 0
        rows1, rows2 = _read_csv(out1), _read_csv(out2)
        assert tuple(rows1[0]) == REPORT_COLUMNS and list(REPORT_COLUMNS)[-1] == "runtime"
        for r in rows1 + rows2:
            r.pop("runtime")
        assert rows1 == rows2
        assert [r["method"] for r in rows1] == ["PDE"] * 3
        prices = [float(r["price"]) for r in rows1]
        assert prices[0] < prices[1] < prices[2]
        assert "price" in capsys.readouterr().out

    def test_price_mc(self, small, tmp_path):
        out = tmp_path / "mc.csv"
        assert main(["price-mc", "--config", str(small), "--paths", "4000", "--csv", str(out)]) == 0
        rows = _read_csv(out)
        for r in rows:
            assert float(r["ci_low"]) <= float(r["price"]) <= float(r["ci_high"])
            assert r["paths"] == "4000" and r["seed"] == "12345"

    def test_env_config(self, small, monkeypatch, capsys):
        monkeypatch.setenv("FMM_CONFIG", str(small))
        assert main(["implied-vol", "6.610817e-7", "9.666517e-5", "3.314849e-4"]) == 0
        out = capsys.readouterr().out
        assert "1.500036" in out

    def test_no_config(self, monkeypatch, capsys):
        monkeypatch.delenv("FMM_CONFIG", raising=False)
        assert main(["price-pde"]) == 2
        assert "FMM_CONFIG" in capsys.readouterr().err

    def test_usage_errors(self, small, tmp_path):
        assert main(["bogus"]) == 2
        assert main(["implied-vol", "--config", str(small), "1e-5"]) == 2
        assert main(["converge", "--config", str(small), "--resolutions", "8"]) == 2
        assert main(["converge", "--config", str(small), "--resolutions", "8", "16", "--reference", "16"]) == 2
        assert main(["price-pde", "--config", str(small), "--dt-divisor", "abc"]) == 2
        assert main(["price-pde", "--config", str(small), "--nu", "1", "--kappa", "1"]) == 2
        assert main(["price-mc", "--config", str(small), "--paths", "1"]) == 2
        bad = tmp_path / "bad.ini"
        bad.write_text(SMALL.replace("correlation = 0.5", "correlation = 1.5"))
        assert main(["price-pde", "--config", str(bad)]) == 2
        assert main(["price-pde", "--config", str(tmp_path / "missing.ini")]) == 2

    def test_numerical_failure(self, small, capsys):
        assert main(["implied-vol", "--config", str(small), "1.0", "1.0", "1.0"]) == 3
        assert "NoSolutionError" in capsys.readouterr().err

    def test_converge(self, small, tmp_path):
        out = tmp_path / "c.csv"
        assert main(["converge", "--config", str(small), "--quiet", "--csv", str(out)]) == 0
        rows = _read_csv(out)
        assert tuple(rows[0]) == CONVERGE_COLUMNS
        assert [r["L"] for r in rows] == ["8", "16"]
        assert rows[0]["l2_order"] == "" and float(rows[1]["l2_order"]) > 1.0

    def test_r_max_flag(self, small, tmp_path):
        base, near = tmp_path / "a.csv", tmp_path / "b.csv"
        assert main(["converge", "--config", str(small), "--quiet", "--csv", str(base)]) == 0
        argv = ["converge", "--config", str(small), "--quiet", "--csv", str(near), "--r-max", "0.05"]
        assert main(argv) == 0
        assert _read_csv(base)[0]["l2_error"] != _read_csv(near)[0]["l2_error"]

    def test_cross_validate(self, tmp_path):
        # out of the money the spot interpolation error at L = 64 exceeds the
        # interval of 10^5 paths, so the ladder stops at the money
        cfg = tmp_path / "xv.ini"
        cfg.write_text(SMALL.replace("strikes = x1.1 atm x0.9", "strikes = atm x0.9"))
        out = tmp_path / "x.csv"
        argv = ["cross-validate", "--config", str(cfg), "--quiet", "--csv", str(out), "--resolution", "64", "--paths", "100000"]
        assert main(argv) == 0
        rows = _read_csv(out)
        assert tuple(rows[0]) == CROSS_COLUMNS
        assert [r["status"] for r in rows] == ["PASS"] * 2

    def test_csv_stdout(self, small, capsys):
        assert main(["implied-vol", "--config", str(small), "--csv", "-", "6.610817e-7", "9.666517e-5", "3.314849e-4"]) == 0
        out = capsys.readouterr().out
        assert "a,b,strike,price,implied_vol" in out

    def test_module_entry_point(self):
        res = subprocess.run([sys.executable, "-m", "fmm_pricing", "--help"], capture_output=True, text=True)
        assert res.returncode == 0
        for cmd in ("price-mc", "price-pde", "implied-vol", "converge", "cross-validate"):
            assert cmd in res.stdout
