# conftest.py
import math

import numpy as np
import pytest

from services.cutoff import build_cutoff
from services.kernel import build_tables

# Reduced kernel grid: far-left regime, ramp and far-right regime at dt = 0.1
KERNEL_TEST_C = 31.0
KERNEL_TEST_T = (-KERNEL_TEST_C - 12.0, 3.0, 461)
KERNEL_TEST_THETA = 81


@pytest.fixture(scope="session")
def cutoff():
    return build_cutoff(KERNEL_TEST_C)


@pytest.fixture(scope="session")
def kernel_tables(cutoff):
    t = np.linspace(*KERNEL_TEST_T)
    theta = np.linspace(-0.5 * math.pi, 0.5 * math.pi, KERNEL_TEST_THETA)
    return build_tables(cutoff, t, theta, n_jobs=1)


@pytest.fixture
def rng():
    return np.random.default_rng(20240101)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-scope scans over the whole cone catalog")
