import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

from fbmcvs.prototype import phydyas_filter  # noqa: E402
from fbmcvs.waveform import BurstConfig, centered_subcarriers  # noqa: E402

settings.register_profile(
    "default", max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def small_config():
    """M=16 with 8 centered subcarriers; N=8 keeps head and tail designs apart."""
    return BurstConfig(M=16, active=centered_subcarriers(16, 8), N=8, V=2, gamma=0.1)


@pytest.fixture(scope="session")
def filt16():
    return phydyas_filter(16)


@pytest.fixture(scope="session")
def ref_config():
    return BurstConfig.reference()


@pytest.fixture(scope="session")
def filt256():
    return phydyas_filter(256)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
