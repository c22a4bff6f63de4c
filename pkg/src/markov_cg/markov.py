"""Finite-state Markov matrices, generators and invariant measures.

Convention: ``K[i, j]`` is the transition weight from state ``i`` to ``j``.
``K`` acts on functions (column vectors) and its transpose ``K.T`` acts on
measures, so one step of the chain for a probability vector ``p`` is
``K.T @ p``.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import (
    DimensionMismatch,
    MarkovCGError,
    NegativeEntry,
    NonPositiveInvariant,
    NonUniqueInvariant,
    NotProbability,
    RowSumViolation,
)

STRUCT_TOL = 1e-12
SPECTRAL_TOL = 1e-9
EPS_POS = 1e-14


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def validate_prob(p, tol: float = STRUCT_TOL, positive: bool = False,
                  eps_pos: float = EPS_POS) -> np.ndarray:
    """Return ``p`` as a read-only probability vector.

    Raises ``NotProbability`` on negative entries, wrong mass or (with
    ``positive=True``) entries below ``eps_pos``.
    """
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise NotProbability(f"expected a non-empty vector, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise NotProbability("non-finite entries")
    if np.any(p < 0):
        raise NotProbability(f"negative entry at {int(np.argmin(p))}")
    if abs(p.sum() - 1.0) > tol:
        raise NotProbability(f"mass {p.sum()!r} differs from 1")
    if positive and np.any(p < eps_pos):
        raise NotProbability(f"entry {int(np.argmin(p))} is not positive")
    return _frozen(p)


def validate_markov(K, tol: float = STRUCT_TOL, square: bool = True) -> np.ndarray:
    """Validate a row-stochastic matrix.

    Rows whose sum lies within ``tol`` of one are renormalized; entries in
    ``[-tol, 0)`` are treated as rounding noise and set to zero.

    Raises
    ------
    NegativeEntry
        If an entry is below ``-tol``.
    RowSumViolation
        If a row sum differs from one by more than ``tol``.
    """
    K = np.array(K, dtype=float)
    if K.ndim != 2 or (square and K.shape[0] != K.shape[1]):
        raise DimensionMismatch(f"expected a square matrix, got shape {K.shape}")
    if not np.all(np.isfinite(K)):
        raise MarkovCGError("matrix has non-finite entries")
    neg = np.argwhere(K < -tol)
    if len(neg):
        i, j = (int(v) for v in neg[0])
        raise NegativeEntry(i, j, float(K[i, j]))
    K[K < 0] = 0.0
    sums = K.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > tol)
    if len(bad):
        raise RowSumViolation(int(bad[0]), float(sums[bad[0]]))
    return _frozen(K / sums[:, None])


def validate_generator(A, tol: float = STRUCT_TOL) -> np.ndarray:
    """Validate a Markov generator: nonnegative off-diagonal, zero row sums."""
    A = np.array(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {A.shape}")
    off = A.copy()
    np.fill_diagonal(off, 0.0)
    neg = np.argwhere(off < -tol)
    if len(neg):
        i, j = (int(v) for v in neg[0])
        raise NegativeEntry(i, j, float(A[i, j]))
    sums = A.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums) > tol)
    if len(bad):
        raise RowSumViolation(int(bad[0]), float(sums[bad[0]]))
    return _frozen(A)


def invariant_measure(K, tol: float = SPECTRAL_TOL, eps_pos: float = EPS_POS) -> np.ndarray:
    """Unique positive invariant probability vector of ``K``.

    Computed as the normalized null vector of ``K.T - I`` from a full SVD;
    the second-smallest singular value certifies uniqueness.
    """
    K = np.asarray(K, dtype=float)
    n = K.shape[0]
    _, s, vt = np.linalg.svd(K.T - np.eye(n))
    if n > 1 and s[-2] < tol:
        raise NonUniqueInvariant(
            f"null space of K* - I has dimension > 1 (sigma_2 = {s[-2]:.3e})")
    v = vt[-1]
    pi = v / v.sum()
    if np.any(pi <= eps_pos):
        raise NonPositiveInvariant(f"invariant vector has non-positive entry {pi.min():.3e}")
    pi = pi / pi.sum()
    resid = np.max(np.abs(K.T @ pi - pi))
    if resid > tol:
        raise NonUniqueInvariant(f"null vector residual {resid:.3e} exceeds {tol:.1e}")
    return _frozen(pi)


def is_detailed_balance(K, pi, tol: float = STRUCT_TOL) -> bool:
    """True iff ``max |pi_i K_ij - pi_j K_ji| <= tol``."""
    m = np.asarray(pi)[:, None] * np.asarray(K)
    return bool(np.max(np.abs(m - m.T)) <= tol)


def generator_of(K) -> np.ndarray:
    K = np.asarray(K, dtype=float)
    return _frozen(K - np.eye(K.shape[0]))


def chain_step(K, p) -> np.ndarray:
    """One step ``p -> K* p`` of the chain on measures."""
    return np.asarray(K).T @ np.asarray(p, dtype=float)


def relative_density(p, pi) -> np.ndarray:
    """Density ``p / pi`` of a measure against a positive reference."""
    p = np.asarray(p, dtype=float)
    pi = np.asarray(pi, dtype=float)
    if p.shape != pi.shape:
        raise DimensionMismatch(f"{p.shape} vs {pi.shape}")
    return p / pi


def invariance_residual(K, pi) -> float:
    K = np.asarray(K)
    pi = np.asarray(pi)
    return float(np.max(np.abs(K.T @ pi - pi)))


def load_chain(path, tol: float = STRUCT_TOL):
    """Read a chain file ``{"n", "K", "pi"?}``; returns ``(K, pi)``.

    ``pi`` is computed with :func:`invariant_measure` when absent.
    """
    data = json.loads(Path(path).read_text())
    K = np.asarray(data["K"], dtype=float)
    n = int(data.get("n", K.shape[0]))
    if K.shape != (n, n):
        raise DimensionMismatch(f"declared n={n} but K has shape {K.shape}")
    K = validate_markov(K, tol)
    if data.get("pi") is not None:
        pi = validate_prob(data["pi"], tol, positive=True)
        if pi.shape != (n,):
            raise DimensionMismatch(f"pi has length {pi.size}, expected {n}")
    else:
        pi = invariant_measure(K)
    return K, pi


def dump_chain(path, K, pi=None) -> None:
    K = np.asarray(K)
    data = {"n": int(K.shape[0]), "K": K.tolist()}
    if pi is not None:
        data["pi"] = np.asarray(pi).tolist()
    Path(path).write_text(json.dumps(data, indent=2))
