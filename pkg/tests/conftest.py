import numpy as np
import pytest

from mfld.core import ParticleSystem
from mfld.datagen import CirclesParams, MultiIndexParams, gen_circles, gen_multi_index, split


def central_difference(f, x, step=1e-6):
    """Central finite differences of a scalar function at ``x`` (any shape)."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        hi, lo = x.copy(), x.copy()
        hi[idx] += step
        lo[idx] -= step
        grad[idx] = (f(hi) - f(lo)) / (2.0 * step)
    return grad


def random_system(rng, n_particles, input_dim, scale=10.0, std=1.0):
    return ParticleSystem(std * rng.standard_normal((n_particles, input_dim + 2)), scale)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def circles_split():
    return split(gen_circles(CirclesParams(n=200, seed=11)), 0.8, seed=12)


@pytest.fixture(scope="session")
def regression_split():
    data = gen_multi_index(MultiIndexParams(n=120, d=5, k=3, r=2.0, label_scale=3.0, seed=21))
    return split(data, 0.8, seed=22)
