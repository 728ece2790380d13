import csv
import io
import json

import numpy as np
import pytest

from logconcave_lab.report import CSV_COLUMNS, VerificationReport, emit_report, fmt_num, reports_to_csv


def _rep(lhs, rhs, kind="pinned", **kw):
    return VerificationReport("demo", lhs, rhs, 1.0, lhs / rhs if rhs else np.nan, 1e-9, "abc", kind=kind, **kw)


def test_status_rules():
    assert _rep(1.0, 2.0).status == "PASS"
    assert _rep(2.0, 1.0).status == "FAIL"
    assert _rep(1.0, 1.0 - 1e-10).status == "PASS"  # within tolerance
    assert _rep(2.0, 1.0, kind="empirical").status == "PASS"
    assert _rep(1.0, 2.0, checks={"side": False}).status == "FAIL"
    assert _rep(np.nan, 1.0).status == "SKIP"


def test_fmt_num_roundtrip():
    for x in (0.1, 1 / 3, 1e-300, -2.5e17):
        assert float(fmt_num(x)) == x
    assert fmt_num(np.inf) == "inf" and fmt_num(np.nan) == "nan"


def test_csv_columns_exact():
    text = reports_to_csv([_rep(1.0, 2.0)])
    rows = list(csv.reader(io.StringIO(text)))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert rows[1][7] == "PASS"
    assert len(rows) == 2


def test_rows_keep_given_order(tmp_path):
    reps = [_rep(2.0, 1.0), _rep(1.0, 2.0), _rep(3.0, 1.0)]
    emit_report(reps, "csv", tmp_path / "r.csv")
    status = [line.split(",")[7] for line in (tmp_path / "r.csv").read_text().splitlines()[1:]]
    assert status == ["FAIL", "PASS", "FAIL"]


def test_outputs_are_deterministic(tmp_path):
    reps = [_rep(1.0, 2.0, details={"a": [1.0, np.inf]}), _rep(0.5, 0.25)]
    for fmt in ("csv", "json"):
        a = emit_report(reps, fmt, tmp_path / f"a.{fmt}").read_bytes()
        b = emit_report(reps, fmt, tmp_path / f"b.{fmt}").read_bytes()
        assert a == b


def test_json_mirrors_fields(tmp_path):
    path = emit_report([_rep(1.0, 2.0)], "json", tmp_path / "r.json")
    data = json.loads(path.read_text())
    assert set(CSV_COLUMNS) <= set(data[0])
    assert data[0]["margin"] == 1.0


def test_unknown_format(tmp_path):
    with pytest.raises(ValueError):
        emit_report([], "xml", tmp_path / "r.xml")
