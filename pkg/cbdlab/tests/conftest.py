"""
Pytest configuration and fixtures for the cbdlab tests.

This module provides:
- Seeded random generators (one fresh generator per test)
- Small dyadic grids in one and two dimensions
- Random vector-valued grid functions and zonotope bodies
- Marker registration (unit, integration, slow)
"""

import sys
from pathlib import Path

import numpy as np
import pytest

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent.parent))

from cbdlab.models.experiment import ExperimentConfig
from cbdlab.services.bodies import ConvexBody
from cbdlab.services.domination import make_operator
from cbdlab.services.grid import DyadicGrid, GridFunction


@pytest.fixture
def rng():
    """Generator with a fixed seed, recreated for every test."""
    return np.random.default_rng(20240611)


@pytest.fixture
def line_grid():
    """d = 1, L = 4: sixteen cells."""
    return DyadicGrid(dimension=1, depth=4)


@pytest.fixture
def fine_line_grid():
    """d = 1, L = 6: sixty-four cells, the default experiment grid."""
    return DyadicGrid(dimension=1, depth=6)


@pytest.fixture
def square_grid():
    """d = 2, L = 3: an 8 x 8 torus."""
    return DyadicGrid(dimension=2, depth=3)


@pytest.fixture
def hilbert(fine_line_grid):
    """Periodic Hilbert kernel on the L = 6 line grid."""
    return make_operator(fine_line_grid)


@pytest.fixture
def random_pair(fine_line_grid, rng):
    """
    Random E^2 valued pair (f, g) on the L = 6 line grid.

    Returns a tuple (f, g) of GridFunction with n = 2, m = 1.
    """
    return (
        GridFunction.random(fine_line_grid, 2, rng),
        GridFunction.random(fine_line_grid, 2, rng),
    )


def make_zonotope(rng: np.random.Generator, n: int, atoms: int) -> ConvexBody:
    """Body of ``atoms`` random segments in R^n with equal weights (p = 1, m = 1)."""
    blocks = rng.standard_normal((atoms, n, 1))
    return ConvexBody(blocks=blocks, weights=np.full(atoms, 1.0 / atoms), p=1.0, r=2.0)


@pytest.fixture
def zonotope_factory(rng):
    """
    Factory for random zonotopes.

    Usage:
        def test_something(zonotope_factory):
            body = zonotope_factory(n=2, atoms=6)
    """

    def factory(n: int = 2, atoms: int = 6) -> ConvexBody:
        return make_zonotope(rng, n, atoms)

    return factory


@pytest.fixture
def small_config():
    """Experiment config small enough for end-to-end runs in tests."""
    return ExperimentConfig.model_validate(
        {
            "seed": 3,
            "grid": {"d": 1, "L": 4},
            "values": {"n": 2},
            "suite": {"instances": 2},
        }
    )


def pytest_configure(config):
    """Register custom pytest markers."""
    config.addinivalue_line("markers", "unit: mark test as a unit test")
    config.addinivalue_line("markers", "integration: mark test as an integration test")
    config.addinivalue_line("markers", "slow: mark test as slow (end-to-end pipeline runs)")
