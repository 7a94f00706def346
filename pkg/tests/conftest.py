import numpy as np
import pytest

from aoii_ctmc import Channel, validate

TERNARY_Q = [
    [-1.025, 1.0, 0.025],
    [0.05, -0.75, 0.7],
    [0.4, 0.01, -0.41],
]


@pytest.fixture(scope="session")
def ternary():
    return validate(TERNARY_Q)


@pytest.fixture(scope="session")
def channel():
    return Channel(mu=1.0)


def random_generator(rng: np.random.Generator, n: int) -> np.ndarray:
    """Random dense irreducible rate matrix with rates in (0.1, 2)."""
    q = rng.uniform(0.1, 2.0, size=(n, n))
    np.fill_diagonal(q, 0.0)
    np.fill_diagonal(q, -q.sum(axis=1))
    return q


def random_subgenerator(rng: np.random.Generator, k: int, absorb: float = 0.5) -> np.ndarray:
    """Random transient sub-generator: every state leaks at least `absorb`."""
    a = rng.uniform(0.0, 1.5, size=(k, k))
    np.fill_diagonal(a, 0.0)
    leak = rng.uniform(absorb, absorb + 1.0, size=k)
    np.fill_diagonal(a, -(a.sum(axis=1) + leak))
    return a
