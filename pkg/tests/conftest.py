import numpy as np
import pytest

from torusflow.spectral import make_grid


@pytest.fixture
def grid64():
    return make_grid((2 * np.pi, 2 * np.pi), (64, 64))


@pytest.fixture
def grid32():
    return make_grid((2 * np.pi, 2 * np.pi), (32, 32))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
