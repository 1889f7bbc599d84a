import numpy as np
import pytest

from dqc1lab.matqm import DensityMatrix, canonical_space, random_state


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_joint(rng, d=8, rank=None):
    space = canonical_space(d)
    return DensityMatrix(space, random_state(space.dim, rng, rank))
