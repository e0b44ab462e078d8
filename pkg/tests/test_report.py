import json
import math

import pytest

from core.report import ComparisonReport, KsEntry, emit_report, load_report


def sample_report():
    report = ComparisonReport(experiment="fluctuation", params={"n": 100, "alpha": math.inf})
    report.ks.append(KsEntry(coord=1, time=0.5, D=0.5, nA=200, nB=200, p_value=math.nan))
    report.criteria = {"ks": True, "barrier": True}
    return report


def test_empty_report_is_valid_json(tmp_path):
    json_path, csv_path = emit_report(ComparisonReport(experiment="lln"), str(tmp_path / "empty"))
    data = json.loads(open(json_path).read())
    assert data["passed"] is True
    assert data["ks"] == []
    assert open(csv_path).read() == "coord,time,D,nA,nB\n"


def test_csv_rows(tmp_path):
    _, csv_path = emit_report(sample_report(), str(tmp_path / "out" / "run"))
    lines = open(csv_path).read().splitlines()
    assert lines == ["coord,time,D,nA,nB", "1,0.5,0.5,200,200"]


def test_non_finite_values_become_strings(tmp_path):
    json_path, _ = emit_report(sample_report(), str(tmp_path / "run.json"))
    data = load_report(json_path)
    assert data["params"]["alpha"] == "inf"
    assert data["ks"][0]["p_value"] == "nan"
    assert data["notes"]


def test_reemit_is_byte_identical(tmp_path):
    first = emit_report(sample_report(), str(tmp_path / "a"))
    second = emit_report(sample_report(), str(tmp_path / "b"))
    for x, y in zip(first, second):
        assert open(x, "rb").read() == open(y, "rb").read()


def test_failed_criterion_fails_report():
    report = sample_report()
    report.criteria["barrier"] = False
    assert not report.passed
    assert report.to_dict()["passed"] is False


def test_load_rejects_foreign_schema(tmp_path):
    path = tmp_path / "other.json"
    path.write_text(json.dumps({"schema": "something-else"}))
    with pytest.raises(ValueError):
        load_report(str(path))


def test_unwritable_destination(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        emit_report(sample_report(), str(blocker / "run"))
