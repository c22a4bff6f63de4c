"""Random test instances: measures, partitions, reversible and generic chains."""

from __future__ import annotations

import numpy as np

from .coarse import ClusterMap


def random_prob(rng: np.random.Generator, n: int, floor: float = 0.05) -> np.ndarray:
    p = rng.random(n) + floor
    return p / p.sum()


def random_partition(rng: np.random.Generator, n: int, n_hat: int | None = None) -> ClusterMap:
    """Uniformly shuffled surjective partition of ``n`` states into ``n_hat`` blocks."""
    if n_hat is None:
        n_hat = int(rng.integers(1, n + 1))
    a = np.concatenate([np.arange(n_hat), rng.integers(0, n_hat, n - n_hat)])
    rng.shuffle(a)
    return ClusterMap(a, n_hat)


def random_reversible_chain(rng: np.random.Generator, n: int, density: float = 1.0):
    """Reversible chain with prescribed random ``pi``; returns ``(K, pi)``.

    Off-diagonal rates are ``S_ij pi_j / c`` for a symmetric positive ``S``,
    so ``pi_i K_ij`` is symmetric.  With ``density < 1`` some symmetric
    pairs are removed (a spanning path keeps the chain irreducible).
    """
    pi = random_prob(rng, n)
    S = rng.random((n, n)) + 0.1
    S = S + S.T
    if density < 1.0:
        keep = rng.random((n, n)) < density
        keep = keep | keep.T
        path = np.zeros((n, n), dtype=bool)
        idx = rng.permutation(n)
        path[idx[:-1], idx[1:]] = True
        S = np.where(keep | path | path.T, S, 0.0)
    R = S * pi[None, :]
    np.fill_diagonal(R, 0.0)
    scale = 1.05 * max(R.sum(axis=1).max(), 1e-300)
    K = R / scale
    K[np.diag_indices(n)] = 1.0 - K.sum(axis=1)
    return K, pi


def random_chain(rng: np.random.Generator, n: int) -> np.ndarray:
    """Dense positive row-stochastic matrix (generally not reversible)."""
    K = rng.random((n, n)) + 0.05
    return K / K.sum(axis=1, keepdims=True)
