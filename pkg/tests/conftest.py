import numpy as np
import pytest

from touchmap.geometry import make_box, make_icosphere


@pytest.fixture(scope="session")
def unit_cube():
    return make_box((1.0, 1.0, 1.0))


@pytest.fixture(scope="session")
def icosphere_unit():
    return make_icosphere(1.0, 3)


@pytest.fixture(scope="session")
def icosphere_small():
    """Radius 0.05 m, the desk-scale test object."""
    return make_icosphere(0.05, 3)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
