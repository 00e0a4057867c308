import numpy as np
import pytest

from greenlab import geometry as geo


@pytest.fixture(scope="session")
def grid():
    return geo.make_grid(2 * np.pi, 8.0, 64, 512)


@pytest.fixture(scope="session")
def small_grid():
    return geo.make_grid(2 * np.pi, 6.0, 16, 256)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
