import numpy as np
import pytest

from transactional import qcore


@pytest.fixture
def eq6():
    """Product of the (1,2) and (3,4) singlets."""
    return qcore.tensor(qcore.bell_state("Psi-", 1, 2), qcore.bell_state("Psi-", 3, 4))


@pytest.fixture
def rng():
    return np.random.default_rng(20131)


def binomial_sigma(p, n):
    return np.sqrt(p * (1 - p) / n)
