import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "pkg", max_examples=25, deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large,
                           HealthCheck.large_base_example])
settings.load_profile("pkg")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
