import math
import time

import pytest

from heatlab.cli import main, resolve_config, build_parser
from heatlab.config import RunConfig
from heatlab.runner import CSV_HEADER, csv_body, render_csv, run


def _rows(path):
    lines = csv_body(path.read_text()).splitlines()
    assert lines[0] == CSV_HEADER
    return [ln.split(",") for ln in lines[1:]]


def test_assembly_check_fast(tmp_path):
    out = tmp_path / "a.csv"
    start = time.perf_counter()
    code = main(["run", "--scenario", "assembly-check", "--levels", "3..5", "--out", str(out)])
    assert time.perf_counter() - start < 5
    assert code == 0
    rows = _rows(out)
    assert len(rows) == 6
    assert all(r[0] == "assembly-check" and r[8] == "pass" for r in rows)


def test_spectrum_square(tmp_path):
    out = tmp_path / "s.csv"
    res = run(RunConfig(domains=("square",), levels=(3, 4), scenarios=("spectrum",)), str(out))
    assert res.exit_code == 0
    lam1 = [float(r[7]) for r in _rows(out) if r[5] == "lambda" and r[6] == "1"]
    assert len(lam1) == 2
    assert abs(lam1[1] - 2 * math.pi**2) / (2 * math.pi**2) < 0.02
    assert "spectrum" in res.summary


def test_dof_cap_skip_row(tmp_path):
    out = tmp_path / "cap.csv"
    res = run(RunConfig(domains=("lshape",), levels=(3,), scenarios=("analyticity",), dof_cap=100), str(out))
    rows = _rows(out)
    assert len(rows) == 1 and "skipped: dof cap" in rows[0][8]
    assert res.exit_code == 0


def test_flags_override_config(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("levels = 3..5\nseed = 5\n[output]\npath = x.csv\n")
    args = build_parser().parse_args(["run", "--config", str(cfg), "--levels", "2..3", "--domain", "square"])
    rc = resolve_config(args)
    assert rc.levels == (2, 3) and rc.seed == 5 and rc.domains == ("square",) and rc.output == "x.csv"


def test_bad_config_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("domain = pentagon\n")
    assert main(["run", "--config", str(cfg)]) == 2
    assert "pentagon" in capsys.readouterr().err
    assert main(["run", "--config", str(tmp_path / "missing.cfg")]) == 2


def test_rows_match_configured_scenarios(tmp_path):
    out = tmp_path / "d.csv"
    run(RunConfig(domains=("square",), levels=(2, 3), scenarios=("deltainv", "projections")), str(out))
    assert {r[0] for r in _rows(out)} == {"deltainv", "projections"}


def test_deterministic_csv(tmp_path):
    cfg = RunConfig(domains=("lshape",), levels=(2, 3), scenarios=("analyticity", "maxreg", "deltainv"))
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run(cfg, str(a))
    run(cfg, str(b))
    assert csv_body(a.read_text()) == csv_body(b.read_text())
    assert a.read_text().startswith("# generated ")


def test_render_csv_timestamp():
    text = render_csv([], timestamp="2000-01-01T00:00:00")
    assert text == "# generated 2000-01-01T00:00:00\n" + CSV_HEADER + "\n"
