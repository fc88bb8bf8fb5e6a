import numpy as np
import pytest

from patchwave.grid import build_patch_grid
from patchwave.microscale import PhysicalParams


@pytest.fixture(scope="session")
def spec_10_6():
    """The workhorse configuration: N=10, n=6, r=0.1 (dim 1475)."""
    return build_patch_grid(10, 6, 0.1)


@pytest.fixture(scope="session")
def weak_damping():
    return PhysicalParams(1e-6, 1e-4)


@pytest.fixture(scope="session")
def strong_damping():
    return PhysicalParams(1e-3, 1e-2)


@pytest.fixture
def rng():
    return np.random.default_rng(42)
