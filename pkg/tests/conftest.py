import numpy as np
import pytest

from nextnn import Dataset, NetArch, init_weights


def central_diff_gradient(fun, x, h=1e-6):
    """Independent finite-difference oracle: central differences per coordinate."""
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    for k in range(x.size):
        step = np.zeros_like(x)
        step[k] = h
        grad[k] = (fun(x + step) - fun(x - step)) / (2.0 * h)
    return grad


def random_dataset(rng, n, d, task="regression", binary=False):
    x = rng.uniform(size=(n, d))
    if binary:
        y = rng.integers(0, 2, size=n).astype(float)
    else:
        y = rng.uniform(size=n)
    return Dataset(x, y, task)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_arch():
    return NetArch(3, (4,), "tanh")


@pytest.fixture
def small_weights(small_arch):
    return init_weights(small_arch, 7)
