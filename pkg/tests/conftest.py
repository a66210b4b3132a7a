import numpy as np
import pytest

from roughfolio.paths import PartitionSequence, SampledPath, TimeGrid
from roughfolio.rough import RoughLift


def brownian_like(seed, n_cells, dim, horizon=1.0, scale=1.0):
    """Seeded scaled random walk with Gaussian increments on a uniform grid."""
    rng = np.random.default_rng(seed)
    dt = horizon / n_cells
    incr = rng.standard_normal((n_cells, dim)) * np.sqrt(dt) * scale
    vals = np.concatenate([np.zeros((1, dim)), np.cumsum(incr, axis=0)])
    return SampledPath(TimeGrid.uniform(horizon, n_cells), vals)


@pytest.fixture(scope="session")
def bm2d():
    return brownian_like(seed=7, n_cells=1 << 12, dim=2)


@pytest.fixture(scope="session")
def bm2d_lift(bm2d):
    return RoughLift.from_path(bm2d)


@pytest.fixture(scope="session")
def bm1d():
    return brownian_like(seed=11, n_cells=1 << 12, dim=1)


@pytest.fixture(scope="session")
def bm1d_lift(bm1d):
    return RoughLift.from_path(bm1d)


@pytest.fixture(scope="session")
def dyadic_levels(bm2d):
    return PartitionSequence.dyadic(bm2d.grid, 5)


def smooth_path(n_cells=256, horizon=1.0):
    t = np.linspace(0.0, horizon, n_cells + 1)
    return SampledPath(TimeGrid(t), np.stack([t, 2 * t], axis=1))
