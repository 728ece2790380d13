import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from logconcave_lab.constructions import make_gaussian, make_uniform_cube
from logconcave_lab.density import (Box, GridDensity, Potential, build_grid_density, conditional_slice,
                                    load_density, mean_and_covariance, moments, moreau_smooth, resample,
                                    sample, save_density)
from logconcave_lab.errors import ConvexityAuditFailed, MassUnderflow, ZeroMassSlice


def test_standard_gaussian_moments(g1):
    # oracle: E X^2 = 1, E X^4 = 3
    assert moments(g1, [2]) == pytest.approx(1.0, abs=1e-6)
    assert moments(g1, [4]) == pytest.approx(3.0, abs=1e-5)
    assert g1.mass() == pytest.approx(1.0, abs=1e-12)


def test_uniform_cube_second_moment():
    d = build_grid_density(make_uniform_cube(2, 1.0), [201, 201])
    mean, cov = mean_and_covariance(d)
    assert np.allclose(mean, 0, atol=1e-12)
    # trapezoid rule on x^2 over [-1,1]: 1/3 + h^2/6
    h = 2 / 200
    assert cov[0, 0] == pytest.approx(1 / 3 + h * h / 6, rel=1e-9)
    assert abs(cov[0, 1]) < 1e-12


def test_correlated_gaussian_conditional_slice(g2_rho5):
    # X2 | X1 = 1 is N(0.5, 0.75)
    x1 = g2_rho5.grids[0]
    node = x1[np.argmin(np.abs(x1 - 1.0))]
    c = conditional_slice(g2_rho5, [(0, node)])
    m = c.expect(c.grids[0])
    v = c.expect((c.grids[0] - m) ** 2)
    assert m == pytest.approx(0.5 * node, abs=1e-4)
    assert v == pytest.approx(0.75, abs=1e-3)


def test_conditional_slice_needs_a_prefix(g2_rho5):
    with pytest.raises(ValueError):
        conditional_slice(g2_rho5, [(1, 0.0)])


def test_zero_mass_slice():
    dom = Box([-1, -1], [1, 1])
    pot = Potential(dom, lambda x: np.where(x[..., 0] + x[..., 1] < 0, 0.0, np.inf), "nonsmooth")
    d = build_grid_density(pot, [21, 21])
    with pytest.raises(ZeroMassSlice):
        conditional_slice(d, [(0, 1.0)])


def test_nonconvex_potential_rejected():
    pot = Potential(Box([-2], [2]), lambda x: np.cos(3 * x[..., 0]))
    with pytest.raises(ConvexityAuditFailed):
        build_grid_density(pot, [64])


def test_mass_underflow():
    pot = Potential(Box([-1], [1]), lambda x: np.full(x.shape[:-1], np.inf), "nonsmooth")
    with pytest.raises(MassUnderflow):
        build_grid_density(pot, [16], audit=False)


def test_shift_invariant_normalization():
    # adding a constant to V must not change the density
    a = build_grid_density(make_gaussian(1, box_radius=6), [101])
    base = make_gaussian(1, box_radius=6)
    b = build_grid_density(Potential(base.domain, lambda x: base.func(x) + 700.0), [101])
    assert np.allclose(a.values, b.values, rtol=1e-12)


@pytest.mark.parametrize("fmt", ["text", "binary"])
def test_save_load_roundtrip(tmp_path, g2_rho5, fmt):
    path = tmp_path / f"d.{fmt}"
    save_density(g2_rho5, path, fmt)
    back = load_density(path)
    assert back.box == g2_rho5.box
    assert np.array_equal(back.values, g2_rho5.values)


def test_sampler_matches_quadrature():
    d = build_grid_density(make_gaussian(2, [[1.0, 0.5], [0.5, 1.0]], 6.0), [256, 256])
    s = sample(d, 20000, seed=7)
    cov = np.cov(s.points.T)
    assert np.allclose(cov, [[1, 0.5], [0.5, 1]], atol=0.05)
    # one-sample KS on the first marginal
    assert stats.kstest(s.points[:, 0], "norm").pvalue > 1e-3


def test_sampler_is_deterministic(g2_rho5):
    a = sample(g2_rho5, 500, seed=3)
    b = sample(g2_rho5, 500, seed=3)
    assert np.array_equal(a.points, b.points)
    assert a.digest() == b.digest()


def test_resample_preserves_moments(g2_rho5):
    r = resample(g2_rho5, Box([-6, -6], [6, 6]), (181, 181))
    _, cov = mean_and_covariance(r)
    assert cov[0, 1] == pytest.approx(0.5, abs=2e-3)


def test_moreau_envelope_of_abs():
    # inf_y |y| + (x-y)^2/s is the Huber function
    s = 0.5
    pot = Potential(Box([-3], [3]), lambda x: np.abs(x[..., 0]), "nonsmooth", np.zeros(1))
    env = moreau_smooth(pot, s)
    xs = np.array([[-2.0], [-0.1], [0.0], [0.2], [1.5]])
    t = np.abs(xs[:, 0])
    huber = np.where(t <= s / 2, t * t / s, t - s / 4)
    assert np.allclose(env(xs), huber, atol=1e-7)
    assert np.all(env(xs) <= pot(xs) + 1e-12)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.2, 3.0), st.floats(-1.0, 1.0))
def test_gaussian_variance_property(var, mean):
    d = build_grid_density(make_gaussian(1, [[var]], 10.0, [mean]), [2001])
    m, c = mean_and_covariance(d)
    assert m[0] == pytest.approx(mean, abs=1e-6)
    assert c[0, 0] == pytest.approx(var, rel=1e-4)


def test_grid_density_is_read_only(g1):
    with pytest.raises(ValueError):
        g1.values[0] = 1.0
