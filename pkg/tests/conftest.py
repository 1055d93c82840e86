import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "qsblab",
    deadline=None,
    max_examples=30,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("qsblab")


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
