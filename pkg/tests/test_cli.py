import csv

import numpy as np
import pytest

from logconcave_lab.cli import main
from logconcave_lab.config import parse_config
from logconcave_lab.density import load_density
from logconcave_lab.suite import run_suite
from logconcave_lab.transport1d import MonotoneMap1D

SMALL = """
seed: 3
output: {{dir: {out}, formats: [csv, json]}}
measures:
  - {{name: g, kind: gaussian, dim: 2, shape: [48, 48]}}
  - {{name: gc, kind: gaussian, dim: 2, covariance: [[1.0, 0.5], [0.5, 1.0]], shape: [48, 48]}}
  - {{name: a, kind: gaussian, dim: 1, shape: [401]}}
  - {{name: b, kind: gaussian, dim: 1, covariance: [[0.5]], shape: [401]}}
  - {{name: tri, kind: convex_body_2d, vertices: [[0, 0], [1, 0], [1, 1]], barycenter: true, shape: [96, 96]}}
pairs:
  - {{name: corr, mu: g, nu: gc}}
  - {{name: one, mu: a, nu: b}}
checks:
  - id: transport_entropy
  - id: entropy_lower_bound
  - id: weighted_poincare
    measures: [gc, tri]
  - id: martingale
    measures: [g]
  - id: cheeger_1d
    measures: [a]
    count: 5
"""


@pytest.fixture
def small_cfg(tmp_path):
    path = tmp_path / "suite.yaml"
    path.write_text(SMALL.format(out=tmp_path / "reports"))
    return path


def test_empty_suite(tmp_path):
    res = run_suite(parse_config("checks: []"), out_dir=tmp_path)
    assert res.exit_status == 0 and res.reports == []
    assert (tmp_path / "report.csv").read_text().startswith("inequality_id,")


def test_verify_small_suite(small_cfg, tmp_path):
    assert main(["verify", "--config", str(small_cfg)]) == 0
    rows = list(csv.DictReader(open(tmp_path / "reports" / "report.csv")))
    assert rows and all(r["status"] != "FAIL" for r in rows)
    # config order: transport rows come first
    assert rows[0]["inequality_id"].startswith("transport_entropy")


def test_verify_jobs_and_determinism(small_cfg, tmp_path):
    main(["verify", "--config", str(small_cfg), "--out", str(tmp_path / "r1")])
    main(["verify", "--config", str(small_cfg), "--out", str(tmp_path / "r2"), "--jobs", "3"])
    for name in ("report.csv", "report.json"):
        assert (tmp_path / "r1" / name).read_bytes() == (tmp_path / "r2" / name).read_bytes()


def test_failing_check_sets_exit_status(tmp_path):
    text = SMALL.format(out=tmp_path) + "  - {id: martingale, measures: [gc]}\n"
    res = run_suite(parse_config(text), out_dir=tmp_path)
    assert res.exit_status == 1


def test_informational_check_never_gates(tmp_path):
    text = SMALL.format(out=tmp_path) + "  - {id: martingale, measures: [gc], informational: true}\n"
    assert run_suite(parse_config(text), out_dir=tmp_path).exit_status == 0


def test_config_error_exit_code(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("checks:\n  - id: nope\n")
    assert main(["verify", "--config", str(bad)]) == 2
    assert main(["verify", "--config", str(tmp_path / "absent.yaml")]) == 2


def test_map_knothe_dump(small_cfg, tmp_path):
    out = tmp_path / "map.txt"
    assert main(["map", "knothe", "corr", "--config", str(small_cfg), "--out", str(out)]) == 0
    data = np.loadtxt(out)
    assert data.shape[1] == 4
    core = np.all(np.abs(data[:, :2]) < 2, axis=1)
    assert np.allclose(data[core, 3], 0.5 * data[core, 0] + np.sqrt(0.75) * data[core, 1], atol=0.4)


def test_map_one_dim_uses_monotone_format(small_cfg, tmp_path):
    out = tmp_path / "m1.txt"
    main(["map", "knothe", "one", "--config", str(small_cfg), "--out", str(out)])
    T = MonotoneMap1D.load(out)
    assert np.allclose(T.values[150:250], np.sqrt(0.5) * T.source_grid[150:250], atol=1e-3)


def test_map_recentering_dump(small_cfg, tmp_path):
    out = tmp_path / "r.txt"
    main(["map", "recentering", "gc", "--config", str(small_cfg), "--out", str(out)])
    data = np.loadtxt(out)
    core = np.abs(data[:, 0]) < 3
    assert np.allclose(data[core, 3], data[core, 1] - 0.5 * data[core, 0], atol=1e-3)


@pytest.mark.parametrize("fmt", ["text", "binary"])
def test_example_dump(small_cfg, tmp_path, fmt):
    out = tmp_path / f"g.{fmt}"
    assert main(["example", "tri", "--format", fmt, "--config", str(small_cfg), "--out", str(out)]) == 0
    d = load_density(out)
    assert d.shape == (96, 96)


def test_moments_dump_and_grid_scale(small_cfg, tmp_path):
    out = tmp_path / "m.csv"
    assert main(["moments", "gc", "--grid-scale", "0.5", "--config", str(small_cfg), "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "axis,x1,mean,variance,lambda_sq"
    assert len(lines) == 1 + 1 + 24


def test_unknown_measure_is_config_error(small_cfg):
    assert main(["moments", "nothing", "--config", str(small_cfg)]) == 2
