import numpy as np
import pytest
from hypothesis import settings

from wavenmpc.vehicle import VehicleParams

settings.register_profile("ci", max_examples=60, deadline=None)
settings.load_profile("ci")


@pytest.fixture(scope="session")
def params() -> VehicleParams:
    return VehicleParams()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
