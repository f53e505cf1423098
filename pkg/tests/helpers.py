"""Data generators shared by the test modules."""

import numpy as np

from drselect.core import Dataset
from drselect.rng import substream


def mixed_role_data(n, seed):
    """Quadratic outcome in X1, X2 and logistic treatment in X1, X3, plus two noise columns."""
    rng = substream(seed, 99)
    z = rng.standard_normal((n, 5))
    e = 1.0 / (1.0 + np.exp(-(1.0 + z[:, 0] + z[:, 2])))
    a = (rng.random(n) < e).astype(float)
    mu = 0.1 * z[:, 0] ** 2 + z[:, 1] ** 2 + 2.0 * z[:, 1]
    y = mu + a + rng.standard_normal(n)
    return Dataset.from_arrays(y, a, z, [f"X{j}" for j in range(1, 6)])


def noise_data(n, p, seed):
    rng = substream(seed, 98)
    z = rng.standard_normal((n, p - 1))
    a = (rng.random(n) < 0.5).astype(float)
    y = rng.standard_normal(n)
    return Dataset.from_arrays(y, a, z)
