"""
Shared fixtures for the splatreg test suite.
"""

import numpy as np
import pytest

from splatreg.model import SplatModel
from splatreg.mother import GAUSSIAN


def make_random_model(rng: np.random.Generator, k: int, d: int, p: int) -> SplatModel:
    """Well-conditioned random model: A near 0.3·I, centers in the unit cube, masses near 1/k."""
    A = 0.3 * np.eye(d) + 0.05 * rng.standard_normal((k, d, d))
    return SplatModel(GAUSSIAN, v=rng.standard_normal((k, p)), A=A,
                      b=rng.uniform(0.0, 1.0, size=(k, d)), m=rng.dirichlet(np.full(k, 5.0)))


@pytest.fixture
def rng():
    """Seeded generator"""
    return np.random.default_rng(20240611)


@pytest.fixture
def unit_splat():
    """Standard normal splat in 1-D with v = 1, m = 1"""
    return SplatModel(GAUSSIAN, v=[[1.0]], A=[[[1.0]]], b=[[0.0]], m=[1.0])


@pytest.fixture
def random_model(rng):
    """Factory for random well-conditioned models"""
    def factory(k=3, d=2, p=1):
        return make_random_model(rng, k, d, p)
    return factory
