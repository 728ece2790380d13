"""Acceptance suite: eleven end-to-end criteria at their stated tolerances.

Each test prints one ``ACCEPTANCE <k> PASS|FAIL: ...`` line (visible under
``pytest -v`` as well as ``-s``).  Criteria 3-7, 9 and 10 read the reports of
the bundled suite, which criterion 11 runs twice.
"""
import time

import numpy as np
import pytest
from scipy import stats

from logconcave_lab.config import default_config_path, load_config
from logconcave_lab.constructions import barycentered, make_convex_body_2d, make_gaussian, steiner_tv_check
from logconcave_lab.density import build_grid_density, mean_and_covariance
from logconcave_lab.inequalities import A_WEIGHTED_POINCARE
from logconcave_lab.knothe import build_knothe
from logconcave_lab.recentering import conditional_moments
from logconcave_lab.suite import run_suite

TEN_MINUTES = 600.0


def announce(capsys, k, ok, text):
    with capsys.disabled():
        print(f"\nACCEPTANCE {k} {'PASS' if ok else 'FAIL'}: {text}")
    assert ok, text


@pytest.fixture(scope="module")
def bundled(tmp_path_factory):
    cfg = load_config(default_config_path())
    runs = []
    for k in range(2):
        out = tmp_path_factory.mktemp(f"bundled{k}")
        t0 = time.perf_counter()
        res = run_suite(cfg, out_dir=out)
        runs.append((res, out, time.perf_counter() - t0))
    return runs


def reports(bundled, ident):
    return [r for r in bundled[0][0].reports if r.inequality_id == ident]


def _central_interval(mu, axis_mass, frac):
    x = mu.grids[0]
    cdf = np.cumsum(axis_mass) / np.sum(axis_mass)
    lo = x[np.searchsorted(cdf, (1 - frac) / 2)]
    hi = x[np.searchsorted(cdf, 1 - (1 - frac) / 2)]
    return (x >= lo) & (x <= hi)


def test_1_recentering_exactness(capsys):
    t0 = time.perf_counter()
    worst_m = worst_v = 0.0
    for rho in (0.0, 0.3, 0.5, 0.8):
        mu = build_grid_density(make_gaussian(2, [[1, rho], [rho, 1]], 8.0), [512, 512])
        cm = conditional_moments(mu)
        x1 = mu.grids[0]
        core = _central_interval(mu, cm.mass_tables[1], 0.95)
        worst_m = max(worst_m, float(np.max(np.abs(cm.mean_tables[1][core] - rho * x1[core]))))
        worst_v = max(worst_v, float(np.max(np.abs(cm.var_tables[1][core] - (1 - rho ** 2)))))
    elapsed = time.perf_counter() - t0
    ok = worst_m <= 1e-4 and worst_v <= 1e-4 and elapsed < 30
    announce(capsys, 1, ok, f"max |m2 - rho x1| = {worst_m:.2e}, max |var2 - (1-rho^2)| = {worst_v:.2e}, "
                            f"{elapsed:.1f} s (limits 1e-4, 1e-4, 30 s)")


def test_2_knothe_correctness(capsys):
    rho = 0.5
    mu = build_grid_density(make_gaussian(2, box_radius=8.0), [512, 512])
    nu = build_grid_density(make_gaussian(2, [[1, rho], [rho, 1]], 8.0), [512, 512])
    T = build_knothe(mu, nu)
    x1, x2 = np.meshgrid(*mu.grids, indexing="ij")
    # central 90% of a standard planar Gaussian: |x|^2 <= chi2_2 quantile
    core = x1 ** 2 + x2 ** 2 <= stats.chi2.ppf(0.9, 2)
    err = max(float(np.max(np.abs(T._broadcast(T.table(0)) - x1)[core])),
              float(np.max(np.abs(T._broadcast(T.table(1)) - (rho * x1 + np.sqrt(1 - rho ** 2) * x2))[core])))
    cells = err / mu.spacing[0]
    mean, cov = T.pushforward_moments()
    nu_mean, nu_cov = mean_and_covariance(nu)
    dm = max(float(np.max(np.abs(mean - nu_mean))), float(np.max(np.abs(cov - nu_cov))))
    ok = cells <= 2 and dm <= 1e-3
    announce(capsys, 2, ok, f"max map error {cells:.3f} cells (limit 2); moment mismatch {dm:.2e} (limit 1e-3)")


def test_3_entropy_lower_bound(bundled, capsys):
    reps = [r for r in reports(bundled, "entropy_lower_bound") if r.kind == "pinned"]
    worst = min(r.rhs - r.lhs for r in reps)
    var = next(r for r in reps if r.label == "var_change_1d")
    anchor = abs(var.lhs - 0.19315) <= 1e-3 and abs(var.rhs - 0.31815) <= 1e-3
    ok = len(reps) >= 12 and worst >= -1e-6 and anchor and all(r.status == "PASS" for r in reps)
    announce(capsys, 3, ok, f"{len(reps)} pairs, worst entropy - bound = {worst:.3e} (limit -1e-6); "
                            f"variance change bound {var.lhs:.5f}, entropy {var.rhs:.5f}")


def test_4_transport_entropy(bundled, capsys):
    reps = reports(bundled, "transport_entropy")
    worst = min(r.rhs - r.lhs for r in reps)
    dims = set()
    cfg = load_config(default_config_path())
    for r in reps:
        mu_name = cfg.pairs[r.label][0]
        dims.add(int(cfg.measures[mu_name].get("dim", 2)))
    ok = worst >= -1e-6 and {2, 3} <= dims and len({r.label for r in reps}) >= 12
    announce(capsys, 4, ok, f"{len(reps)} coupling reports (both cost forms) over dims {sorted(dims)}, "
                            f"worst D - cost = {worst:.3e} (limit -1e-6)")


def test_5_weighted_poincare(bundled, capsys):
    reps = [r for r in reports(bundled, "weighted_poincare")]
    measures = {r.label.split(":")[0] for r in reps}
    funcs = {r.label.split(":", 1)[1] for r in reps}
    best = max(r.best_constant_estimate for r in reps)
    ok = (len(measures) >= 8 and len(funcs) >= 10 and {"triangle", "quad"} <= measures
          and all(r.status == "PASS" for r in reps) and best <= 63.43 and best <= A_WEIGHTED_POINCARE)
    announce(capsys, 5, ok, f"{len(funcs)} functions x {len(measures)} measures, suite-wide best constant "
                            f"{best:.4f} (pinned {A_WEIGHTED_POINCARE:.4f}, cap 63.43)")


def test_6_variance_identity(bundled, capsys):
    reps = reports(bundled, "variance_identity")
    worst = max(r.lhs / r.details["E_norm4"] for r in reps)
    ortho_ok = all(r.checks["orthogonality"] for r in reps)
    ok = all(r.status == "PASS" for r in reps) and worst <= 1e-6 and ortho_ok
    announce(capsys, 6, ok, f"{len(reps)} measures, worst residual / E|X|^4 = {worst:.2e} (limit 1e-6), "
                            f"orthogonality within 1e-8 scale: {ortho_ok}")


def test_7_variance_anchors(bundled, capsys):
    reps = {r.label: r for r in reports(bundled, "variance_bound")}
    gauss = {n: reps[name].details["var_norm_sq_x"] for n, name in ((1, "g1"), (2, "g2"), (3, "g3"))}
    gauss_ok = all(abs(v - 2 * n) <= 1e-3 for n, v in gauss.items())
    chain_ok = all(r.checks["fourth_moment_chain"] for r in reps.values())
    borell = reps["lap1"].details["borell_ratio"][0]
    ok = gauss_ok and chain_ok and abs(borell - 6) <= 1e-3
    text = ", ".join(f"n={n}: {v:.6f}" for n, v in gauss.items())
    announce(capsys, 7, ok, f"Var|X|^2 {text}; E[Xbar_i^4] <= 16 E[X_i^4] on {len(reps)} measures: {chain_ok}; "
                            f"Laplace Borell ratio {borell:.5f}")


def test_8_steiner_law(capsys):
    body = barycentered(make_convex_body_2d([[0, 0], [1, 0], [1, 1]]))
    rep = steiner_tv_check(body, (512, 512), tol=1e-2)
    announce(capsys, 8, rep.status == "PASS", f"TV distance {rep.lhs:.2e} at 512^2 (limit 1e-2)")


def test_9_cube_weight_floor(bundled, capsys):
    reps = reports(bundled, "t2_cube")
    Rs = sorted(r.details["R"] for r in reps)
    floors_ok = all(r.details["weight_floor_6R2_lambda_sq"] / (6 * r.details["R"] ** 2)
                    >= 1 / (6 * r.details["R"] ** 2) - 1e-6 for r in reps)
    finite = all(np.isfinite(r.best_constant_estimate) for r in reps)
    ratios = ", ".join(f"R={r.details['R']}: {r.best_constant_estimate:.4f}" for r in reps)
    ok = Rs == [0.5, 1.0, 2.0] and floors_ok and finite and all(r.checks["weight_floor"] for r in reps)
    announce(capsys, 9, ok, f"weight floor holds: {floors_ok}; W2-bound^2/(R^2 D) {ratios}")


def test_10_hj_bound(bundled, capsys):
    reps = reports(bundled, "hj_bound")
    fatou = all(r.checks["fatou_uniform_bound"] for r in reps)
    worst = min(r.rhs - r.lhs + r.tolerance for r in reps)
    ok = len(reps) >= 3 and fatou and all(r.status == "PASS" for r in reps)
    q = "; ".join(f"{r.label}: {r.lhs:.4f} vs {r.rhs:.4f}" for r in reps)
    announce(capsys, 10, ok, f"t=1e-4 quotients vs 8 int sum lambda^-2 (d f)^2: {q}; Fatou bound: {fatou}; "
                             f"worst slack {worst:.3e}")


def test_11_determinism(bundled, capsys):
    (r1, out1, t1), (r2, out2, t2) = bundled
    same = all((out1 / f).read_bytes() == (out2 / f).read_bytes() for f in ("report.csv", "report.json"))
    ok = same and max(t1, t2) < TEN_MINUTES and r1.exit_status == 0
    announce(capsys, 11, ok, f"byte-identical reports: {same}; runs took {t1:.0f} s and {t2:.0f} s "
                             f"(limit {TEN_MINUTES:.0f} s); exit status {r1.exit_status}")
