import os

import pytest
from hypothesis import HealthCheck, settings

from qlinksim.harness import config as cfg

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=200, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def lab():
    return cfg.link_physics("Lab")


@pytest.fixture(scope="session")
def qlink():
    return cfg.link_physics("QLink")
