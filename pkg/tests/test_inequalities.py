import numpy as np
import pytest
from scipy import optimize

from logconcave_lab.constructions import make_convex_body_2d, make_gaussian, make_uniform_cube, tilt, barycentered
from logconcave_lab.costs import n_cost, n_cost_inverse
from logconcave_lab.density import build_grid_density
from logconcave_lab.inequalities import (A_WEIGHTED_POINCARE, HJ_CONSTANT, TestFunction, fatou_constant,
                                         fd_gradient, standard_family, sup_convolution, verify_entropy_lower_bound,
                                         verify_hj_bound, verify_t2_cube, verify_transport_entropy,
                                         verify_weighted_poincare, weight_floor)
from logconcave_lab.recentering import build_recentering


def test_pinned_constant():
    assert A_WEIGHTED_POINCARE == pytest.approx(49 + 8 * np.sqrt(3), abs=1e-12)
    assert A_WEIGHTED_POINCARE == (4 * np.sqrt(3) + 1) ** 2


def test_fatou_constant_by_dense_scan():
    top = n_cost_inverse(1.0)
    v = np.linspace(1e-4, top, 200001)
    assert fatou_constant() == pytest.approx(4 * np.max(v * v / n_cost(v)), rel=1e-7)
    assert fatou_constant() == pytest.approx(18.4246, abs=1e-3)


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_family_gradients(dim, rng):
    fam = standard_family(dim)
    assert len(fam) >= 10
    pts = rng.normal(size=(200, dim))
    assert fam.max_gradient_discrepancy(pts) < 1e-6


def test_fd_gradient_of_quadratic(rng):
    pts = rng.normal(size=(10, 3))
    g = fd_gradient(lambda x: np.sum(x ** 2, axis=1), pts)
    assert np.allclose(g, 2 * pts, atol=1e-8)


def test_weighted_poincare_linear_is_tight(g2_rho5):
    # Var(X bar_2) = 1 - rho^2 = E[Var(X_2 | X_1)]: the ratio is exactly 1
    reps = {r.label: r for r in verify_weighted_poincare(g2_rho5)}
    assert reps["x2"].best_constant_estimate == pytest.approx(1.0, abs=1e-6)
    assert reps["x2"].lhs == pytest.approx(0.75, abs=1e-3)
    assert all(r.status == "PASS" for r in reps.values())


def test_weighted_poincare_martingale_reports(g2):
    reps = verify_weighted_poincare(g2)
    ids = {r.inequality_id for r in reps}
    assert ids == {"weighted_poincare", "weighted_poincare_martingale"}


def test_weighted_poincare_on_triangle(triangle):
    _, mu = triangle
    reps = verify_weighted_poincare(mu)
    assert len(reps) >= 10
    assert all(r.status == "PASS" for r in reps)
    assert max(r.best_constant_estimate for r in reps) <= A_WEIGHTED_POINCARE


def test_weighted_poincare_detects_too_small_constant(g2_rho5):
    reps = verify_weighted_poincare(g2_rho5, a=0.5)
    assert any(r.status == "FAIL" for r in reps)


def test_transport_entropy_report(g2, g2_rho5):
    rep = verify_transport_entropy(g2, g2_rho5)
    assert rep.status == "PASS"
    assert 0 < rep.lhs < rep.rhs


def test_entropy_lower_bound_report(g1):
    nu = build_grid_density(make_gaussian(1, [[0.25]]), [4001])
    rep = verify_entropy_lower_bound(g1, nu)
    assert rep.status == "PASS"
    assert rep.lhs == pytest.approx(0.19315, abs=1e-3)


@pytest.mark.parametrize("R", [0.5, 1.0, 2.0])
def test_weight_floor_on_cubes(R):
    mu = build_grid_density(make_uniform_cube(2, R), [64, 64])
    # uniform on [-R, R]: Var = R^2/3 (plus O(h^2)), 6 R^2 lambda^2 close to 6
    assert weight_floor(mu, R) == pytest.approx(6.0, rel=2e-3)
    nu = build_grid_density(tilt(make_uniform_cube(2, R), [0.7 / R, -0.3 / R]), [64, 64])
    rep = verify_t2_cube(mu, nu, R)
    assert rep.kind == "empirical" and rep.checks["weight_floor"]
    assert np.isfinite(rep.best_constant_estimate) and rep.best_constant_estimate > 0


def test_t2_rejects_support_outside_cube(g2):
    with pytest.raises(ValueError):
        verify_t2_cube(g2, g2, 1.0)


@pytest.fixture(scope="module")
def small_product():
    return build_grid_density(make_gaussian(2, box_radius=6.0), [48, 48])


def test_sup_convolution_of_linear_function(small_product):
    # for small t, (P_t f - f)/t -> 8 sum_i g_i^2 / lambda_i^2 with lambda^2 = 1/3
    pair = build_recentering(small_product)
    g = np.array([0.3, -0.2])
    f = TestFunction("lin", lambda x: x @ g, lambda x: np.broadcast_to(g, x.shape), float(np.linalg.norm(g)), 10.0)
    x = np.array([[0.1, 0.2], [-0.5, 0.4]])
    t = 1e-4
    q = (sup_convolution(pair, f, t, x) - f(x)) / t
    lam_sq = 1 / (3 * small_product.expect(small_product.coordinate(0) ** 2))
    assert q == pytest.approx(HJ_CONSTANT * np.sum(g ** 2) / lam_sq, rel=2e-2)


def test_sup_convolution_never_below_f(small_product, rng):
    f = standard_family(2)["ridge_sin"]
    x = rng.uniform(-2, 2, size=(20, 2))
    assert np.all(sup_convolution(build_recentering(small_product), f, 1e-3, x) >= f(x))


def test_hj_bound_small(small_product):
    f = standard_family(2)["ridge_tanh"]
    rep = verify_hj_bound(small_product, small_product, f, (1e-3, 1e-4))
    assert rep.checks["fatou_uniform_bound"]
    assert rep.status == "PASS"
    assert rep.details["quotients"][-1] <= rep.details["quotients"][0] + 1e-9


def test_hj_needs_bounds(small_product):
    with pytest.raises(ValueError):
        verify_hj_bound(small_product, small_product, standard_family(2)["norm_sq"])
