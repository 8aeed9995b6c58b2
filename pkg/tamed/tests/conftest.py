import numpy as np
import pytest

from tamed._initial import random_field
from tamed._spectral import ManufacturedBasis, TorusBasis


@pytest.fixture(scope="session")
def torus():
    return TorusBasis(n=8)


@pytest.fixture(scope="session")
def manufactured():
    return ManufacturedBasis(spectrum=[1.0, 2.0, 3.5, 7.0, 11.0], seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def smooth(torus, rng):
    """
    A generic field with unit H¹ norm.
    """
    return random_field(torus, rng, h1=1.0)
