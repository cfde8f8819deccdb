import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cavity_forge.qcore import TimeGrid, make_params, sin2_photon

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile("default")


@pytest.fixture
def strong():
    """Strong-coupling ordering used for shaping: 2pi x (15, 2, 3) MHz."""
    return make_params(15, 2, 3)


@pytest.fixture
def lossless():
    return make_params(15, 2, 0)


@pytest.fixture
def fig13_params():
    return make_params(15, 3, 3)


@pytest.fixture
def fig13_grid():
    return TimeGrid.spanning(0.0, 4e-6, 8001)


@pytest.fixture
def fig13_photon(fig13_grid):
    return sin2_photon(fig13_grid, 3.14e-6)


@pytest.fixture
def shaping_grid():
    return TimeGrid.spanning(0.0, 600e-9, 6001)


def samples_for(span, rate, limit=0.1):
    """Smallest sample count that keeps dt * rate at or below ``limit``."""
    return int(math.ceil(span * rate / limit)) + 1


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)
