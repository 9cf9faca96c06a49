import numpy as np
import pytest

from monozero.operators import affine_operator


def random_monotone_operator(rng, n, strong=0.0, with_offset=True):
    """PSD-plus-antisymmetric linear part, so monotonicity holds by construction."""
    G = rng.standard_normal((n, n)) / np.sqrt(n)
    S = rng.standard_normal((n, n))
    J = G @ G.T + 0.5 * (S - S.T) + strong * np.eye(n)
    c = rng.standard_normal(n) if with_offset else np.zeros(n)
    return affine_operator(J, c)


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)
