import numpy as np
import pytest

from dgflow import datasets


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture(scope="session")
def gauss_data():
    """Full-size 25-Gaussians dataset shared across tests."""
    return datasets.gen_25gaussians(100000, seed=1)


@pytest.fixture(scope="session")
def small_gauss_data():
    return datasets.gen_25gaussians(30000, seed=3)
