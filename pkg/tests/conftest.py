import numpy as np
import pytest

from logconcave_lab.constructions import make_gaussian, make_laplace, make_convex_body_2d, barycentered
from logconcave_lab.density import build_grid_density


def gaussian_2d(rho, n=256, radius=8.0):
    return build_grid_density(make_gaussian(2, [[1.0, rho], [rho, 1.0]], radius), [n, n])


@pytest.fixture(scope="session")
def g1():
    return build_grid_density(make_gaussian(1), [4001])


@pytest.fixture(scope="session")
def g2_rho5():
    return gaussian_2d(0.5)


@pytest.fixture(scope="session")
def g2():
    return gaussian_2d(0.0)


@pytest.fixture(scope="session")
def lap1():
    return build_grid_density(make_laplace(1), [40001])


@pytest.fixture(scope="session")
def triangle():
    body = barycentered(make_convex_body_2d([[0, 0], [1, 0], [1, 1]]))
    return body, build_grid_density(body, [192, 192])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
