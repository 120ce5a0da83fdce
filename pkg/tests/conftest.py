import numpy as np
import pytest

from fbsde.jumps.models import FBSDEProblem, FiniteActivityLevyMeasure, SpatialMesh
from fbsde.jumps.problems import registry_get
from fbsde.jumps.solver import SolverConfig


def flat_problem(constant: float = 3.0, horizon: float = 1.0, generator=None) -> FBSDEProblem:
    """Brownian motion plus uniform jumps, constant terminal data and f = 0 unless given"""

    def zero_generator(t, x, y, z, gamma):
        return np.zeros_like(y)

    return FBSDEProblem(
        name="flat",
        drift=lambda t, x: np.zeros_like(x),
        diffusion=lambda t, x: np.ones_like(x),
        jump=lambda t, x, e: e,
        generator=generator or zero_generator,
        terminal=lambda x: np.full_like(x, constant),
        measure=FiniteActivityLevyMeasure.uniform(1.0),
        horizon=horizon,
    )


@pytest.fixture
def example1():
    return registry_get("example1")


@pytest.fixture
def example2():
    return registry_get("example2")


@pytest.fixture
def coarse_mesh():
    # dx = 0.1 over [-1, 2], interval of interest [0, 1]
    return SpatialMesh.uniform(0.1, (0.0, 1.0), 1.0)


@pytest.fixture
def small_config():
    return SolverConfig(m_y=2, m_f=1, degree=3, workers=1, chunk_size=16)


@pytest.fixture
def literal_config():
    return SolverConfig(m_y=2, m_f=1, degree=3, renormalise=False, workers=1, chunk_size=16)
