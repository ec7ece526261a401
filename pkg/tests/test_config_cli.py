import csv
import json
import os
import subprocess
import sys

import pytest

from bergman_geodesics.cli import EXIT_ACCEPTANCE, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, main
from bergman_geodesics.config import (
    DEFAULT_K_LIST,
    DEFAULT_PAIRS,
    ExperimentConfig,
    load_config,
    parse_k_list,
    parse_potential,
)
from bergman_geodesics.errors import ConfigError
from bergman_geodesics.geometry import Bump


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_ini(tmp_path, text, name="exp.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


# ---- configuration -------------------------------------------------------------

def test_defaults():
    cfg = load_config()
    assert cfg.k_list == DEFAULT_K_LIST and cfg.pairs == DEFAULT_PAIRS
    assert cfg.seed == 0x5EED


def test_parse_potential_and_k_list():
    b = parse_potential("bump:amplitude=0.3, width=1.5")
    assert isinstance(b, Bump) and b.width == 1.5
    assert parse_k_list("8, 16,32") == (8, 16, 32)
    for bad in ("16,8", "8,8", "", "a,b", "0,4", "8,1024"):
        with pytest.raises(ConfigError) as exc:
            parse_k_list(bad)
        assert exc.value.field == "k_list"


def test_ini_roundtrip(tmp_path):
    p = write_ini(tmp_path, """
[experiment]
k_list = 8,16
seed = 0x10
[grid]
t_nodes = 33
[tolerances]
scale = 2.0
[output]
dir = somewhere
[pair:mine]
phi0 = fs
phi1 = dilation:c=0.5
""")
    cfg = load_config(p)
    assert cfg.k_list == (8, 16) and cfg.seed == 16 and cfg.t_nodes == 33
    assert cfg.tol_scale == 2.0 and cfg.out_dir == "somewhere"
    assert cfg.pairs == {"mine": ("fs", "dilation:c=0.5")}
    assert load_config(p, k_list="4,8").k_list == (4, 8)


@pytest.mark.parametrize("body,field", [
    ("[grid]\nt_nodes = 3\n", "t_nodes"),
    ("[grid]\nx_max = 100\n", "x_max"),
    ("[grid]\nquad_nodes = 10\n", "quad_nodes"),
    ("[tolerances]\nscale = 0\n", "tol_scale"),
    ("[bogus]\na = 1\n", "bogus"),
    ("[pair:p]\nphi0 = fs\n", "pair:p"),
    ("[pair:p]\nphi0 = fs\nphi1 = bump:amplitude=4,width=0.5\n", "pair:p.phi1"),
    ("[experiment]\nseed = abc\n", "seed"),
])
def test_invalid_configs(tmp_path, body, field):
    with pytest.raises(ConfigError) as exc:
        load_config(write_ini(tmp_path, body))
    assert exc.value.field == field


def test_config_hash_semantics():
    base = ExperimentConfig()
    assert base.config_hash() == ExperimentConfig(out_dir="elsewhere").config_hash()
    for change in ({"k_list": (8, 16)}, {"seed": 1}, {"tol_scale": 2.0}, {"x_nodes": 401},
                   {"pairs": {"a": ("fs", "dilation:c=1")}}, {"harnack_samples": 0}):
        assert ExperimentConfig(**change).config_hash() != base.config_hash()


# ---- command line -----------------------------------------------------------------

def test_spectrum_dilation_rows(tmp_path):
    ini = write_ini(tmp_path, "[pair:dil]\nphi0 = fs\nphi1 = dilation:c=1\n[pair:same]\nphi0 = fs\nphi1 = fs\n")
    out = tmp_path / "nested" / "out"
    assert main(["spectrum", "--config", str(ini), "--k-list", "8,16", "--out", str(out)]) == EXIT_OK
    rows = read_csv(out / "spectrum.csv")
    dil = [r for r in rows if r["pair"] == "dil"]
    assert [int(r["k"]) for r in dil] == [8, 16]
    assert all(abs(float(r["spacing"]) - 0.5) < 1e-12 for r in dil)
    same = [r for r in rows if r["pair"] == "same"]
    assert all(float(r["lambda_min"]) == 0 == float(r["lambda_max"]) for r in same)
    summary = json.loads((out / "summary.json").read_text())
    prov = summary["provenance"]
    assert prov["config_hash"] == load_config(ini, k_list="8,16").config_hash()
    assert set(prov) >= {"config", "version", "python", "numpy", "threads", "started", "timings"}


def test_bad_k_list_exit(tmp_path, capsys):
    assert main(["spectrum", "--k-list", "16,8", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "k_list" in capsys.readouterr().err
    assert main(["mass", "--k-list", "", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_unknown_flag_exit(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["spectrum", "--bogus"])
    assert exc.value.code == EXIT_CONFIG


def test_numerical_failure_exit(tmp_path, capsys):
    ini = write_ini(tmp_path, "[experiment]\nk_list = 8\n[pair:far]\nphi0 = fs\nphi1 = dilation:c=20\n")
    assert main(["converge", "--config", str(ini), "--out", str(tmp_path / "o")]) == EXIT_NUMERICAL
    assert "numerical failure" in capsys.readouterr().err


def test_geodesic_rows(tmp_path):
    ini = write_ini(tmp_path, "[grid]\nt_nodes = 9\nx_nodes = 21\nx_max = 10\n"
                              "[pair:dil]\nphi0 = fs\nphi1 = dilation:c=1\n"
                              "[pair:same]\nphi0 = bump:amplitude=0.2\nphi1 = bump:amplitude=0.2\n")
    assert main(["geodesic", "--config", str(ini), "--k-list", "8,16", "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "geodesic.csv")
    assert len(rows) == 2 * (2 * 9 * 21 + 9 * 21)
    import math
    for r in rows:
        k, t, x, v = int(r["k"]), float(r["t"]), float(r["x"]), float(r["value"])
        if r["pair"] == "dil":
            exact = math.log1p(math.exp(x + t)) - math.log1p(math.exp(x))
            shift = math.log((k + 1) / k) / k if k else 0.0
            assert abs(v - exact - shift) < 1e-9
        elif k == 0:
            assert abs(v) < 1e-12


def test_mass_and_converge(tmp_path):
    ini = write_ini(tmp_path, "[grid]\nt_nodes = 33\nx_nodes = 201\nx_max = 20\n"
                              "[pair:dil]\nphi0 = fs\nphi1 = dilation:c=1\n")
    assert main(["mass", "--config", str(ini), "--k-list", "8,16", "--out", str(tmp_path / "m")]) == 0
    for r in read_csv(tmp_path / "m" / "mass.csv"):
        assert abs(float(r["boundary"])) < 1e-10 and abs(float(r["bulk"])) < 1e-8
    assert main(["converge", "--config", str(ini), "--k-list", "8,16,32", "--out", str(tmp_path / "c")]) == 0
    rows = read_csv(tmp_path / "c" / "converge.csv")
    import math
    for r in rows:
        if r["kind"] == "level":
            k = int(r["k"])
            assert float(r["error"]) == pytest.approx(math.log((k + 1) / k) / k, rel=1e-9)
    s = json.loads((tmp_path / "c" / "summary.json").read_text())
    assert s["results"]["flags"]["dil"]["envelope_nonincreasing"] is True
    assert main(["converge", "--config", str(ini), "--k-list", "8", "--out", str(tmp_path / "one")]) == 0


def test_stats_zero_samples(tmp_path):
    ini = write_ini(tmp_path, "[experiment]\nharnack_samples = 0\n[grid]\nt_nodes = 17\nx_nodes = 101\n"
                              "x_max = 20\n[pair:dil]\nphi0 = fs\nphi1 = dilation:c=1\n")
    assert main(["stats", "--config", str(ini), "--k-list", "8,16", "--out", str(tmp_path)]) == 0
    s = json.loads((tmp_path / "summary.json").read_text())
    assert s["passed"] and any("skipped" in n for n in s["results"]["notes"])
    rows = read_csv(tmp_path / "stats.csv")
    assert not any(r["operation"] == "harnack_global_check" for r in rows)
    assert all(r["passed"] == "true" for r in rows)


def test_reproducible_tables(tmp_path):
    ini = write_ini(tmp_path, "[grid]\nt_nodes = 17\nx_nodes = 101\nx_max = 20\n")
    for name in ("a", "b"):
        for cmd in ("spectrum", "mass", "stats"):
            assert main([cmd, "--config", str(ini), "--k-list", "8,16", "--out", str(tmp_path / name / cmd)]) == 0
    for cmd, table in (("spectrum", "spectrum.csv"), ("mass", "mass.csv"), ("stats", "stats.csv")):
        a = (tmp_path / "a" / cmd / table).read_bytes()
        b = (tmp_path / "b" / cmd / table).read_bytes()
        assert a == b


def test_console_script_threads(tmp_path):
    env = dict(os.environ, BERGEO_THREADS="1")
    r = subprocess.run([sys.executable, "-m", "bergman_geodesics.cli", "spectrum", "--k-list", "8",
                        "--out", str(tmp_path)], env=env, capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert json.loads((tmp_path / "summary.json").read_text())["provenance"]["threads"] == 1
    env["BERGEO_THREADS"] = "zero"
    r = subprocess.run([sys.executable, "-m", "bergman_geodesics.cli", "spectrum", "--out", str(tmp_path)],
                       env=env, capture_output=True, text=True)
    assert r.returncode == EXIT_CONFIG and "BERGEO_THREADS" in r.stderr


@pytest.mark.slow
def test_suite_exit_codes(tmp_path, capsys):
    out = tmp_path / "missing" / "suite"
    code = main(["suite", "--out", str(out)])
    rows = {int(r["id"]): r for r in read_csv(out / "acceptance.csv")}
    assert len(rows) == 13
    failed = sorted(i for i, r in rows.items() if r["passed"] != "true")
    # the only red criterion on the shipped configuration is the density correction ratio
    assert failed == [2] and code == EXIT_ACCEPTANCE
    assert "[FAIL] criterion  2" in capsys.readouterr().out
    tight = main(["suite", "--tol-scale", "1e-6", "--out", str(tmp_path / "tight")])
    assert tight == EXIT_ACCEPTANCE
    rows = read_csv(tmp_path / "tight" / "acceptance.csv")
    assert sum(r["passed"] != "true" for r in rows) > 1
