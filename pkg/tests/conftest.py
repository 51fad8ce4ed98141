import numpy as np
import pytest

from argp.geometry import Rect
from argp.kernels import Hyperparams


@pytest.fixture(scope="session")
def hyper():
    """Kernel hyperparameters of the experimental protocol."""
    return Hyperparams(signal_variance=0.25, length_scale=2.36)


@pytest.fixture(scope="session")
def extent20():
    return Rect(0.0, 20.0, 0.0, 20.0)


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)


def random_rect(rng, lo=0.0, hi=20.0, min_side=0.05) -> Rect:
    x = np.sort(rng.uniform(lo, hi, 2))
    y = np.sort(rng.uniform(lo, hi, 2))
    while x[1] - x[0] < min_side:
        x = np.sort(rng.uniform(lo, hi, 2))
    while y[1] - y[0] < min_side:
        y = np.sort(rng.uniform(lo, hi, 2))
    return Rect(x[0], x[1], y[0], y[1])
