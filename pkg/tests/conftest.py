import numpy as np
import pytest

from gravhartree import RadialGrid, solve_ground_state

MASS_SQ_REF = 44.0492721690  # cross-checked against the gradient-flow oracle


@pytest.fixture(scope="session")
def gs():
    grid = RadialGrid.make("log", 2048, 20.0)
    return solve_ground_state(grid, 1e-10)


@pytest.fixture(scope="session")
def gs_flow():
    grid = RadialGrid.make("log", 2048, 20.0)
    return solve_ground_state(grid, 1e-10, method="flow")


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)
