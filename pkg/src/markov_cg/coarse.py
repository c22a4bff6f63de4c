"""Coarse-graining of Markov chains along a partition of the state space.

A surjective cluster map ``phi`` induces the deterministic Markov matrix
``M`` (lift of cluster functions to state functions), the
measure-weighted reconstruction ``N = Q_pihat^{-1} M* Q_pi`` and the
projection ``P = M N``.  Products with ``M`` and ``M*`` are carried out by
gather/scatter over the assignment vector.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, InvariantMismatch, NotSurjective
from .markov import (
    SPECTRAL_TOL,
    _frozen,
    invariance_residual,
    validate_prob,
)


@dataclass(frozen=True, eq=False)
class ClusterMap:
    """Surjective map from ``n`` states onto ``n_clusters`` blocks (0-based)."""

    assignment: np.ndarray
    n_clusters: int

    def __post_init__(self):
        a = np.array(self.assignment, dtype=np.intp)
        if a.ndim != 1 or a.size == 0:
            raise DimensionMismatch("assignment must be a non-empty vector")
        if a.min() < 0 or a.max() >= self.n_clusters:
            raise DimensionMismatch(
                f"cluster index out of range [0, {self.n_clusters})")
        counts = np.bincount(a, minlength=self.n_clusters)
        if np.any(counts == 0):
            raise NotSurjective(int(np.flatnonzero(counts == 0)[0]))
        a.setflags(write=False)
        object.__setattr__(self, "assignment", a)

    @classmethod
    def from_assignment(cls, assignment) -> "ClusterMap":
        a = np.asarray(assignment, dtype=np.intp)
        return cls(a, int(a.max()) + 1 if a.size else 0)

    @classmethod
    def identity(cls, n: int) -> "ClusterMap":
        return cls(np.arange(n), n)

    @property
    def n(self) -> int:
        return self.assignment.size

    def blocks(self) -> list[np.ndarray]:
        return [np.flatnonzero(self.assignment == k) for k in range(self.n_clusters)]

    def lift(self, xhat) -> np.ndarray:
        """``M xhat``: evaluate a cluster function on states."""
        return np.asarray(xhat, dtype=float)[self.assignment]

    def aggregate(self, p) -> np.ndarray:
        """``M* p``: sum a state measure over blocks."""
        return np.bincount(self.assignment, weights=np.asarray(p, dtype=float),
                           minlength=self.n_clusters)

    def to_json(self) -> dict:
        return {"n": self.n, "assignment": self.assignment.tolist()}


def load_partition(path) -> ClusterMap:
    data = json.loads(Path(path).read_text())
    phi = ClusterMap.from_assignment(data["assignment"])
    if "n" in data and int(data["n"]) != phi.n:
        raise DimensionMismatch(f"declared n={data['n']} but assignment has {phi.n} entries")
    return phi


def build_M(phi: ClusterMap) -> np.ndarray:
    """Dense 0/1 matrix with ``M[i, phi(i)] = 1``."""
    M = np.zeros((phi.n, phi.n_clusters))
    M[np.arange(phi.n), phi.assignment] = 1.0
    return _frozen(M)


def _assignment_of(M) -> np.ndarray:
    M = np.asarray(M)
    return np.argmax(M, axis=1)


def coarse_measure(M, pi) -> np.ndarray:
    """``pihat = M* pi``."""
    return _frozen(np.asarray(M).T @ np.asarray(pi, dtype=float))


def build_N(M, pi) -> np.ndarray:
    """Reconstruction ``N = Q_pihat^{-1} M* Q_pi`` (an ``nhat x n`` Markov matrix).

    ``N[k, i] = pi_i / pihat_k`` when state ``i`` belongs to block ``k``.
    """
    M = np.asarray(M, dtype=float)
    pi = np.asarray(pi, dtype=float)
    a = _assignment_of(M)
    pihat = np.bincount(a, weights=pi, minlength=M.shape[1])
    N = np.zeros((M.shape[1], M.shape[0]))
    N[a, np.arange(M.shape[0])] = pi / pihat[a]
    return _frozen(N)


def projection_P(M, N) -> np.ndarray:
    return _frozen(np.asarray(M) @ np.asarray(N))


def weighted_inner(x, y, pi) -> float:
    """``(x, y)_pi = sum_i x_i y_i pi_i``."""
    x, y, pi = (np.asarray(v, dtype=float) for v in (x, y, pi))
    if not (x.shape == y.shape == pi.shape):
        raise DimensionMismatch(f"shapes {x.shape}, {y.shape}, {pi.shape}")
    return float(np.sum(x * y * pi))


@dataclass(frozen=True, eq=False)
class CoarseGrainPair:
    """The bundle ``(M, N, pi, pihat, P)`` tying a chain to its reduction."""

    phi: ClusterMap
    pi: np.ndarray

    def __post_init__(self):
        pi = validate_prob(self.pi, positive=True)
        if pi.shape != (self.phi.n,):
            raise DimensionMismatch(
                f"pi has length {pi.size}, partition has {self.phi.n} states")
        object.__setattr__(self, "pi", pi)

    @classmethod
    def from_partition(cls, phi, pi) -> "CoarseGrainPair":
        if not isinstance(phi, ClusterMap):
            phi = ClusterMap.from_assignment(phi)
        return cls(phi, np.asarray(pi, dtype=float))

    @property
    def n(self) -> int:
        return self.phi.n

    @property
    def n_hat(self) -> int:
        return self.phi.n_clusters

    @cached_property
    def M(self) -> np.ndarray:
        return build_M(self.phi)

    @cached_property
    def pi_hat(self) -> np.ndarray:
        return _frozen(self.phi.aggregate(self.pi))

    @cached_property
    def N(self) -> np.ndarray:
        return build_N(self.M, self.pi)

    @cached_property
    def P(self) -> np.ndarray:
        return projection_P(self.M, self.N)

    def apply_N(self, x) -> np.ndarray:
        """``N x``: pi-weighted block averages of a state function."""
        return self.phi.aggregate(self.pi * np.asarray(x, dtype=float)) / self.pi_hat

    def apply_Nt(self, chat) -> np.ndarray:
        """``N* chat``: redistribute a block measure proportionally to pi."""
        a = self.phi.assignment
        return self.pi * np.asarray(chat, dtype=float)[a] / self.pi_hat[a]

    def residuals(self) -> dict:
        """Max-abs residuals of the structural identities of ``(M, N, P)``."""
        M, N, P, pi, pihat = self.M, self.N, self.P, self.pi, self.pi_hat
        Qpi = np.diag(pi)
        return {
            "NM_minus_I": float(np.max(np.abs(N @ M - np.eye(self.n_hat)))),
            "MNM_minus_M": float(np.max(np.abs(M @ N @ M - M))),
            "NMN_minus_N": float(np.max(np.abs(N @ M @ N - N))),
            "Qpihat_minus_MtQpiM": float(np.max(np.abs(np.diag(pihat) - M.T @ Qpi @ M))),
            "Ntpihat_minus_pi": float(np.max(np.abs(N.T @ pihat - pi))),
            "P2_minus_P": float(np.max(np.abs(P @ P - P))),
            "P_detailed_balance": float(np.max(np.abs(Qpi @ P - P.T @ Qpi))),
        }


def _check_invariant(K, pi, tol):
    r = invariance_residual(K, pi)
    if r > tol:
        raise InvariantMismatch(f"||K* pi - pi||_inf = {r:.3e} exceeds {tol:.1e}")


def coarse_markov(K, pair: CoarseGrainPair, tol: float = SPECTRAL_TOL) -> np.ndarray:
    """Coarse-grained Markov matrix ``Khat = N K M``.

    ``pair.pi`` must be invariant for ``K``; it is checked, not recomputed.
    """
    K = np.asarray(K, dtype=float)
    _check_invariant(K, pair.pi, tol)
    # N K M = Q_pihat^{-1} M* (Q_pi K) M
    mhat = _restrict(pair.pi[:, None] * K, pair.phi)
    return _frozen(mhat / pair.pi_hat[:, None])


def coarse_generator(A, pair: CoarseGrainPair, tol: float = SPECTRAL_TOL) -> np.ndarray:
    """Coarse-grained generator ``Ahat = N A M``."""
    A = np.asarray(A, dtype=float)
    r = float(np.max(np.abs(A.T @ pair.pi)))
    if r > tol:
        raise InvariantMismatch(f"||A* pi||_inf = {r:.3e} exceeds {tol:.1e}")
    return _frozen(_restrict(pair.pi[:, None] * A, pair.phi) / pair.pi_hat[:, None])


def lumpability_defect(K, pair: CoarseGrainPair, tol: float = SPECTRAL_TOL) -> float:
    """Diagnostic ``||K M - M Khat||_inf``; zero iff ``K`` is exactly lumpable.

    This quantifies what the projection ``P`` discards; it is not a bound.
    """
    K = np.asarray(K, dtype=float)
    Khat = coarse_markov(K, pair, tol)
    KM = np.stack([K[:, pair.phi.assignment == k].sum(axis=1)
                   for k in range(pair.n_hat)], axis=1)
    return float(np.linalg.norm(KM - Khat[pair.phi.assignment], np.inf))


def projected_chain_step(K, pair: CoarseGrainPair, p) -> np.ndarray:
    """One step of ``p -> P* K* P* p``, the chain with forced equilibration."""
    P = pair.P
    return P.T @ (np.asarray(K).T @ (P.T @ np.asarray(p, dtype=float)))


def _restrict(b, phi: ClusterMap) -> np.ndarray:
    a = phi.assignment
    out = np.zeros((phi.n_clusters, phi.n_clusters))
    np.add.at(out, (a[:, None], a[None, :]), np.asarray(b, dtype=float))
    return out


def reduce_report(K, pair: CoarseGrainPair, tol: float = SPECTRAL_TOL) -> dict:
    """Everything the ``reduce`` command writes, as plain JSON-ready data."""
    Khat = coarse_markov(K, pair, tol)
    A = np.asarray(K) - np.eye(pair.n)
    Ahat = coarse_generator(A, pair, tol)
    return {
        "assignment": pair.phi.assignment.tolist(),
        "pi": pair.pi.tolist(),
        "pi_hat": pair.pi_hat.tolist(),
        "N": pair.N.tolist(),
        "K_hat": Khat.tolist(),
        "A_hat": Ahat.tolist(),
        "lumpability_defect": lumpability_defect(K, pair, tol),
        "residuals": pair.residuals(),
    }
