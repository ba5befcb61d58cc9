import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cellfree_fronthaul.config import desk_scale
from cellfree_fronthaul.netmodel import make_scenario

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def desk():
    return desk_scale()


@pytest.fixture(scope="session")
def desk_beta(desk):
    return make_scenario(desk, 0)[1].beta


def scenario(seed=0, **overrides):
    cfg = desk_scale(**overrides)
    return cfg, make_scenario(cfg, seed)[1].beta
