"""Shared helpers for the test suite."""

import numpy as np
import pytest

from bayesmm.balanced_model import BalancedDataset
from bayesmm.numkernel import SpdMatrix


def random_spd(gen, p, scale=1.0):
    """Random well-conditioned SPD matrix of size p."""
    a = gen.standard_normal((p, p))
    m = a @ a.T + p * np.eye(p)
    return SpdMatrix(scale * m)


def random_dataset(gen, n=None, w=None, p=None):
    """Random balanced dataset with an intercept column."""
    if n is None:
        n = int(gen.integers(4, 9))
    if w is None:
        w = int(gen.integers(2, 5))
    if p is None:
        p = int(gen.integers(1, min(4, n) + 1))
    X = np.ones((n, p))
    if p > 1:
        X[:, 1:] = gen.standard_normal((n, p - 1))
    beta = gen.standard_normal(p)
    u = gen.standard_normal(n) * 0.7
    e = gen.standard_normal((n, w))
    y = (X @ beta + u)[:, None] + e
    return BalancedDataset(y=y, X=X)


@pytest.fixture
def gen():
    return np.random.default_rng(20260818)
