import numpy as np
import pytest
import torch
from hypothesis import HealthCheck, settings

from heatformer.fdsolver import simulate
from heatformer.geometry import PlateGeometry
from heatformer.scenario import sample_base_case, sample_challenge2_case

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

torch.set_num_threads(1)


@pytest.fixture
def geom8():
    return PlateGeometry(nx=8, ny=8)


@pytest.fixture
def base_case(geom8):
    return sample_base_case(7, geom8)


@pytest.fixture
def ch2_case():
    return sample_challenge2_case(11, PlateGeometry(nx=10, ny=9))


@pytest.fixture
def small_traj(base_case):
    return simulate(base_case, 12)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
