import numpy as np
import pytest

from rksysid.data import TimeSeries, split_normalize, subsample_missing


def driven_series(n=240, seed=0, dt=0.25, noise=0.0):
    """A small driven nonlinear system: two inputs, two outputs."""
    rng = np.random.default_rng(seed)
    x = np.empty((n, 2))
    sig = 0.0
    for i in range(n):  # smooth first input, rough second
        sig += 0.4 * (rng.normal() - sig)
        x[i, 0] = sig
        x[i, 1] = rng.normal() * 0.5
    y = np.zeros((n, 2))
    for i in range(n - 1):
        y[i + 1, 0] = 0.85 * y[i, 0] + 0.4 * np.tanh(x[i, 0]) + 0.1 * x[i, 1]
        y[i + 1, 1] = 0.7 * y[i, 1] + 0.3 * x[i, 0] * x[i, 1] + 0.2 * np.tanh(y[i, 0])
    if noise:
        y = y + rng.normal(size=y.shape) * noise
    return TimeSeries(t=np.arange(n) * dt, x=x, y=y)


@pytest.fixture(scope="session")
def even_dataset():
    return split_normalize(driven_series(n=240, seed=1))


@pytest.fixture(scope="session")
def uneven_dataset():
    series = subsample_missing(driven_series(n=400, seed=2), 0.4, seed=9)
    return split_normalize(series)
