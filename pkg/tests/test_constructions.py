import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from logconcave_lab.constructions import (PREFIX_FUNCTIONS, barycentered, embed_sum_construction, make_convex_body_2d,
                                          make_gaussian, make_laplace, make_uniform_cube, martingale_increment_check,
                                          steiner_symmetrize_2d, steiner_tv_check, tilt, total_variation,
                                          translate_body)
from logconcave_lab.density import SampleSet, build_grid_density, mean_and_covariance, sample
from logconcave_lab.errors import (ComponentNotMartingale, DegenerateHull, NotBarycentered, NotPositiveDefinite)


def test_gaussian_generator_errors():
    with pytest.raises(NotPositiveDefinite):
        make_gaussian(2, [[1.0, 0.0], [0.0, 1e-8]])
    with pytest.raises(ValueError):
        make_gaussian(2, [[1.0, 0.2], [0.3, 1.0]])


def test_correlated_gaussian_generator():
    mu = build_grid_density(make_gaussian(2, [[1.0, 0.5], [0.5, 1.0]]), [128, 128])
    _, cov = mean_and_covariance(mu)
    assert np.allclose(cov, [[1, 0.5], [0.5, 1]], atol=1e-6)


def test_triangle_barycenter():
    body = make_convex_body_2d([[0, 0], [1, 0], [1, 1]])
    assert body.info["barycenter"] == pytest.approx([2 / 3, 1 / 3])
    assert body.info["area"] == pytest.approx(0.5)


def test_degenerate_hulls():
    with pytest.raises(DegenerateHull):
        make_convex_body_2d([[0, 0], [1, 1], [2, 2]])
    with pytest.raises(DegenerateHull):
        make_convex_body_2d([[0, 0], [1, 1]])


def test_steiner_of_barycentered_triangle():
    body = barycentered(make_convex_body_2d([[0, 0], [1, 0], [1, 1]]))
    sym = steiner_symmetrize_2d(body)
    got = sorted(map(tuple, sym.info["vertices"]))
    assert np.allclose(got, [(-2 / 3, 0.0), (1 / 3, -0.5), (1 / 3, 0.5)], atol=1e-12)
    assert sym.info["area"] == pytest.approx(body.info["area"])


def test_steiner_square_is_fixed():
    sq = make_convex_body_2d([[-1, -1], [1, -1], [1, 1], [-1, 1]])
    sym = steiner_symmetrize_2d(sq)
    assert sorted(map(tuple, sym.info["vertices"])) == sorted(map(tuple, sq.info["vertices"]))


@settings(max_examples=20, deadline=None)
@given(st.lists(st.tuples(st.floats(-2, 2), st.floats(-2, 2)), min_size=4, max_size=9))
def test_steiner_symmetral_is_reflection_symmetric(points):
    try:
        body = barycentered(make_convex_body_2d(points))
    except DegenerateHull:
        return
    sym = steiner_symmetrize_2d(body, tol=1e-7)
    v = np.asarray(sym.info["vertices"])
    probe = np.random.default_rng(0).uniform(v.min(axis=0), v.max(axis=0), size=(200, 2))
    flipped = probe * [1, -1]
    assert np.array_equal(np.isfinite(sym(probe)), np.isfinite(sym(flipped)))
    assert sym.info["area"] == pytest.approx(body.info["area"], rel=1e-9)


def test_steiner_needs_barycenter():
    with pytest.raises(NotBarycentered):
        steiner_symmetrize_2d(make_convex_body_2d([[0, 0], [1, 0], [1, 1]]))


def test_prefix_family_size():
    assert len(PREFIX_FUNCTIONS) == 20
    assert len({name for name, _ in PREFIX_FUNCTIONS}) == 20


def test_martingale_check_product(g2):
    rep = martingale_increment_check(g2)
    assert rep.status == "PASS" and rep.lhs < 1e-10


def test_martingale_check_non_barycentered_triangle():
    tri = build_grid_density(make_convex_body_2d([[0, 0], [1, 0], [1, 1]]), [128, 128])
    rep = martingale_increment_check(tri)
    assert rep.status == "FAIL"
    assert rep.lhs > 0.5


def test_martingale_check_steiner_body():
    body = barycentered(make_convex_body_2d([[0, 0], [1, 0], [1, 1]]))
    sym = build_grid_density(steiner_symmetrize_2d(body), [192, 192])
    assert martingale_increment_check(sym).status == "PASS"


def test_correlated_gaussian_fails_martingale(g2_rho5):
    assert martingale_increment_check(g2_rho5).status == "FAIL"


def test_steiner_tv(triangle):
    body, _ = triangle
    rep = steiner_tv_check(body, (256, 256))
    assert rep.status == "PASS"
    assert rep.lhs <= 1e-2


def test_total_variation_same_law(g2):
    assert total_variation(g2, g2) == 0.0


@pytest.fixture(scope="module")
def sym_triangle_law():
    body = barycentered(make_convex_body_2d([[0, 0], [1, 0], [1, 1]]))
    return build_grid_density(steiner_symmetrize_2d(body), [96, 96])


def test_embed_sum_sample_mode(sym_triangle_law):
    y = embed_sum_construction([sym_triangle_law, sym_triangle_law, sym_triangle_law], count=20000, seed=3, tol=1e-2)
    assert y.dim == 3
    assert martingale_increment_check(y).status == "PASS"


def test_embed_sum_grid_mode(sym_triangle_law):
    small = build_grid_density(steiner_symmetrize_2d(barycentered(make_convex_body_2d([[0, 0], [1, 0], [1, 1]]))),
                               [24, 24])
    y = embed_sum_construction([small, None, small], mode="grid", shape=(32, 32, 32), tol=0.05)
    assert y.mass() == pytest.approx(1.0)
    assert martingale_increment_check(y, tol=0.05).status == "PASS"


def test_embed_single_component_with_zeros(g2):
    y = embed_sum_construction([g2, None, None], count=5000, seed=1)
    assert np.all(y.points[:, 0] == 0.0)
    assert martingale_increment_check(y).status == "PASS"


def test_embed_rejects_non_martingale(g2_rho5):
    with pytest.raises(ComponentNotMartingale):
        embed_sum_construction([g2_rho5, None, None], count=100)


def test_generators_are_log_concave():
    for pot in (make_laplace(2), make_uniform_cube(3), tilt(make_gaussian(2), [1.0, -1.0])):
        build_grid_density(pot, [16] * pot.dim)  # runs the convexity audit
