import numpy as np
import pytest

from mawhf import benchmarks


@pytest.fixture(scope="session")
def scalar_sup():
    return benchmarks.scalar_sup()


@pytest.fixture(scope="session")
def scalar_inf():
    return benchmarks.scalar_inf()


@pytest.fixture(scope="session")
def two_state():
    return benchmarks.two_state()


@pytest.fixture(scope="session")
def two_state_ruin():
    return benchmarks.two_state_ruin()


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240611)
