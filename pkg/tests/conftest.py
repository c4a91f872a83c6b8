"""Shared fixtures.

The expensive objects (working grid, critical point at g=1) are built once
per session; everything downstream treats them as read-only.
"""

import numpy as np
import pytest

from wsaw1d.criticality import speed
from wsaw1d.discretize import build_grid, default_grid


@pytest.fixture(scope="session")
def grid():
    """The working grid: 10-point Gauss-Legendre, 100 panels, s_max=100."""
    return default_grid()


@pytest.fixture(scope="session")
def small_grid():
    """Cheaper grid for tests that only need qualitative spectra."""
    return build_grid(60.0, 60, 10)


@pytest.fixture(scope="session")
def cp1(grid):
    """Critical point, speed, and overlap at g=1 on the working grid."""
    return speed(1.0, grid=grid)


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
