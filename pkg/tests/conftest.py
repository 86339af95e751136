import numpy as np
import pytest

from fleetmix.generator import GeneratorConfig, generate_instance
from fleetmix.instance import Instance


def toy(x=0.3, y=0.4, demand=0.2, Q=1.0, f=5.0, c=2.0):
    """Depot at the origin, one customer at distance 0.5, one vehicle type."""
    return Instance.from_arrays((0, 0), [(x, y)], [demand], [Q], [f], [c], name="toy")


def random_instance(n, seed, types=(3, 6)):
    return generate_instance(GeneratorConfig(n=n, seed=seed, type_count_range=types))


@pytest.fixture
def toy_instance():
    return toy()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
