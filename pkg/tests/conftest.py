import numpy as np
import pytest

from mflab import IfsSpec


@pytest.fixture(scope="session")
def middle_thirds():
    return IfsSpec.middle_thirds()


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)
