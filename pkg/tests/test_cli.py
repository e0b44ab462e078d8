import csv
import json

import pytest

from cli import main

LLN_INI = """
[system]
n = 50
d = 3
lambda = 0.8

[prelimit]
init = empty
replicates = 3
t_end = 1
grid_dt = 0.05

[limit]
fluid_dt = 0.001

[comparison]
experiment = lln
times = 0.5, 1
lln_tolerance = 1.0
"""

MISMATCH_INI = """
[system]
n = 400
preset = critical
expected_regime = super

[prelimit]
replicates = 4
t_end = 1

[limit]
dt = 0.01

[comparison]
times = 0.5, 1
"""


def read_rows(path):
    with open(path) as handle:
        return list(csv.reader(handle))


def test_beta(capsys):
    assert main(["beta", "--n", "4", "--d", "2", "--x", "0.5"]) == 0
    assert capsys.readouterr().out.strip() == "0.166666666666667"


def test_fixed_point(capsys):
    assert main(["fixed-point", "--n", "4", "--d", "2", "--lambda", "0.5", "--floor", "1e-12"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["mu"] == pytest.approx([0.5, 1 / 12])
    assert data["residual"] <= 1e-12


def test_classify_preset(capsys):
    assert main(["classify", "--n", "10000", "--preset", "critical"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["kind"] == "critical"
    assert data["c"] == pytest.approx(1.0)


def test_classify_needs_a_rule(capsys):
    assert main(["classify", "--n", "100"]) == 2
    assert "error" in capsys.readouterr().err


def test_simulate_writes_paths_and_events(tmp_path):
    out = tmp_path / "paths.csv"
    argv = ["simulate", "--n", "20", "--d", "2", "--lambda", "0.7", "--t-end", "1", "--grid-dt", "0.5",
            "--seed", "3", "--coords", "3", "--out", str(out), "--replicates", "2"]
    assert main(argv) == 0
    rows = read_rows(out)
    assert rows[0] == ["replicate", "time", "coord", "value"]
    assert len(rows) == 1 + 2 * 3 * 3
    events = json.loads((tmp_path / "paths.events.json").read_text())
    assert len(events["replicates"]) == 2
    assert all(r["gad_residual_max"] == 0 for r in events["replicates"])


def test_fluid_both_forms(tmp_path):
    out = tmp_path / "fluid.csv"
    assert main(["fluid", "--lambda", "0.8", "--t-end", "1", "--dt", "0.01", "--out", str(out), "--form", "both"]) == 0
    assert read_rows(out)[0] == ["replicate", "time", "coord", "value"]
    assert read_rows(tmp_path / "fluid_explicit.csv")[0] == ["replicate", "time", "coord", "value"]


def test_supercritical_diffusion_writes_pushing_process(tmp_path):
    out = tmp_path / "sde.csv"
    argv = ["diffusion", "--regime", "super", "--r", "2", "--alpha", "0.5", "--t-end", "0.1", "--dt", "0.01",
            "--seed", "1", "--out", str(out)]
    assert main(argv) == 0
    coords = {row[2] for row in read_rows(out)[1:]}
    assert coords == {"0", "1", "2"}


def test_diffusion_accepts_infinite_alpha(tmp_path):
    out = tmp_path / "sde.csv"
    argv = ["diffusion", "--regime", "critical", "--r", "2", "--alpha", "inf", "--t-end", "0.1", "--dt", "0.01",
            "--seed", "1", "--out", str(out)]
    assert main(argv) == 0


def test_invalid_input_exits_with_two(capsys):
    assert main(["fixed-point", "--n", "100", "--d", "3", "--lambda", "1.0"]) == 2
    assert main(["diffusion", "--regime", "sub", "--r", "2", "--k", "2", "--t-end", "1", "--seed", "0",
                 "--out", "unused.csv"]) == 2


def test_compare_writes_report(tmp_path):
    config = tmp_path / "lln.ini"
    config.write_text(LLN_INI)
    stem = tmp_path / "reports" / "lln"
    code = main(["compare", "--config", str(config), "--out", str(stem), "--workers", "1"])
    data = json.loads((tmp_path / "reports" / "lln.json").read_text())
    assert code == (0 if data["passed"] else 1)
    assert data["experiment"] == "lln"
    assert read_rows(tmp_path / "reports" / "lln.csv") == [["coord", "time", "D", "nA", "nB"]]


def test_compare_regime_mismatch(tmp_path, capsys):
    config = tmp_path / "bad.ini"
    config.write_text(MISMATCH_INI)
    assert main(["compare", "--config", str(config), "--out", str(tmp_path / "bad"), "--workers", "1"]) == 1
    data = json.loads(capsys.readouterr().out)
    assert "diagnostics" in data
    assert not (tmp_path / "bad.json").exists()
