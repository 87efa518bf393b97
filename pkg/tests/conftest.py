import numpy as np
import pytest

from reachpred.kinematics import ArmModel


@pytest.fixture
def arm():
    return ArmModel()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
