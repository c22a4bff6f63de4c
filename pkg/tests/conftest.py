import numpy as np
import pytest

from markov_cg.sampling import random_chain, random_partition, random_reversible_chain


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def power_iteration(K, steps=100_000):
    """Independent oracle for the invariant measure."""
    p = np.full(K.shape[0], 1.0 / K.shape[0])
    for _ in range(steps):
        p = K.T @ p
    return p / p.sum()


def reversible_instances(seed, count, n_max=8, n_min=2):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        n = int(rng.integers(n_min, n_max + 1))
        K, pi = random_reversible_chain(rng, n, density=rng.uniform(0.4, 1.0))
        out.append((K, pi, random_partition(rng, n)))
    return out


def generic_instances(seed, count, n_max=8):
    rng = np.random.default_rng(seed)
    return [random_chain(rng, int(rng.integers(2, n_max + 1))) for _ in range(count)]
