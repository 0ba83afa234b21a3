import numpy as np
import pytest
from hypothesis import settings

from dmn.mandel import IsotropicElastic, iso_stiffness, ortho_stiffness
from dmn.network import DmnParams

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


def random_spd(rng, scale=1.0):
    A = rng.normal(size=(6, 6))
    return scale * (A @ A.T / 6.0 + 0.5 * np.eye(6))


def random_ortho(rng):
    E = rng.uniform(1.0, 10.0, 3)
    G = rng.uniform(0.5, 3.0, 3)
    return ortho_stiffness(E[0], E[1], E[2], 0.25, 0.2, 0.3, G[0], G[1], G[2])


def random_params(rng, depth, z_low=0.1, angle=np.pi):
    n = 2 ** depth
    return DmnParams(depth, rng.uniform(z_low, 1.0, n), rng.uniform(-angle, angle, (n - 1, 3)))


def iso(E, nu):
    return iso_stiffness(IsotropicElastic(E, nu))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
