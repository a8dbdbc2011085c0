import os

# acceptance wall-time is quoted single-threaded; pin BLAS before numpy loads
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("MKL_NUM_THREADS", "1")

import numpy as np
import pytest

from kflow.kernels import KernelParams, N_KERNELS, N_THETA


def make_theta(**overrides):
    """All-ones theta with 1-based slot overrides, e.g. make_theta(t5=2.0)."""
    theta = np.ones(N_THETA)
    for key, value in overrides.items():
        theta[int(key[1:]) - 1] = value
    return theta


def single_kernel(kernel_id, theta=None, weight=1.0):
    """Params with exactly one active elemental."""
    alpha = np.zeros(N_KERNELS)
    alpha[kernel_id - 1] = weight
    return KernelParams(alpha, np.ones(N_THETA) if theta is None else theta)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def point_cloud(rng):
    """20 random points in [-1, 1]^3 (the PSD / symmetry fixture)."""
    return rng.uniform(-1.0, 1.0, size=(20, 3))
