import numpy as np
import pytest
from hypothesis import settings

from adialim.profiles import MassProfile
from adialim.smearing import build_grid

# compiled kernels make the first example slow; wall-clock deadlines are meaningless here
settings.register_profile("adialim", deadline=None, max_examples=40)
settings.load_profile("adialim")


@pytest.fixture(scope="session")
def profile_a():
    return MassProfile.smoothstep(1.0, 2.0)


@pytest.fixture(scope="session")
def profile_b():
    return MassProfile.smoothstep(0.0, 1.0)


@pytest.fixture(scope="session")
def profile_c():
    return MassProfile.smoothstep(1.0, 0.0)


@pytest.fixture(scope="session")
def grid33():
    return build_grid(0.5, 4.0, 33)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
