import numpy as np
import pytest

from aurora_nmrd import (
    CorrelationGrid,
    QuadBounds,
    SolverConfig,
    aurora_solve,
    build_kernel,
    default_bounds,
    default_scenario,
    synthesize_profile,
)


@pytest.fixture(scope="session")
def scenario():
    return default_scenario()


@pytest.fixture(scope="session")
def clean_profile(scenario):
    return synthesize_profile(scenario)


@pytest.fixture(scope="session")
def bounds():
    return default_bounds()


@pytest.fixture(scope="session")
def kernel(scenario):
    return build_kernel(scenario.grid, scenario.omega)


@pytest.fixture(scope="session")
def clean_fit(scenario, clean_profile, bounds, kernel):
    return aurora_solve(clean_profile, scenario.grid, bounds, SolverConfig(), kernel=kernel)


@pytest.fixture
def small_grid():
    return CorrelationGrid.logspace(1e-2, 1e2, 60)


@pytest.fixture
def window_bounds():
    return QuadBounds.from_mhz(1.5, 3.5)


def random_psi(rng, bounds, n=None):
    """Uniform draws from the box of ``bounds``."""
    lo, hi = bounds.lower, bounds.upper
    size = (6,) if n is None else (n, 6)
    return lo + (hi - lo) * rng.uniform(size=size)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
