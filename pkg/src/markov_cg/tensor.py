"""Edge-level coarse-graining on second-order tensors.

Edge functions (fluxes) and edge measures (weights ``m = Q_pi K``) are
stored as ``n x n`` arrays.  The incidence operator of the complete graph,
``(Dx)_ij = x_i - x_j``, acts functionally; :meth:`IncidenceOperator.matrix`
materializes it as an ``n**2 x n`` array for least-squares solves and
tests.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .coarse import ClusterMap, _restrict
from .errors import (
    DimensionMismatch,
    InvariantMismatch,
    MarkovCGError,
    WeightDegenerate,
    WeightMismatch,
)
from .markov import SPECTRAL_TOL, STRUCT_TOL, _frozen, invariance_residual

ZERO_WEIGHT = 1e-14


@dataclass(frozen=True, eq=False)
class EdgeTensor:
    """An ``n x n`` edge array tagged as a primal function or a dual measure."""

    entries: np.ndarray
    role: str = "primal"

    def __post_init__(self):
        e = _frozen(self.entries)
        if e.ndim != 2 or e.shape[0] != e.shape[1]:
            raise DimensionMismatch(f"edge tensor must be square, got {e.shape}")
        if not np.all(np.isfinite(e)):
            raise MarkovCGError("edge tensor has non-finite entries")
        if self.role not in ("primal", "dual"):
            raise ValueError(f"unknown role {self.role!r}")
        object.__setattr__(self, "entries", e)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def to_json(self) -> dict:
        return {"n": self.n, "entries": self.entries.tolist(), "role": self.role}

    @classmethod
    def from_json(cls, data: dict) -> "EdgeTensor":
        t = cls(np.asarray(data["entries"], dtype=float), data.get("role", "primal"))
        if "n" in data and int(data["n"]) != t.n:
            raise DimensionMismatch(f"declared n={data['n']} but entries are {t.n}x{t.n}")
        return t

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def load(cls, path) -> "EdgeTensor":
        return cls.from_json(json.loads(Path(path).read_text()))


def tensor_pairing(A, B) -> float:
    """``<<A, B>> = Tr(A* B) = sum_ij A_ij B_ij``."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape != B.shape:
        raise DimensionMismatch(f"{A.shape} vs {B.shape}")
    return float(np.sum(A * B))


def edge_weight(K, pi, tol: float = SPECTRAL_TOL) -> np.ndarray:
    """Edge measure ``m = Q_pi K``; ``pi`` must be invariant for ``K``."""
    r = invariance_residual(K, pi)
    if r > tol:
        raise InvariantMismatch(f"||K* pi - pi||_inf = {r:.3e} exceeds {tol:.1e}")
    return _frozen(np.asarray(pi, dtype=float)[:, None] * np.asarray(K, dtype=float))


def lift(phi: ClusterMap, bhat) -> np.ndarray:
    """``M~ bhat = M bhat M*``: entry ``(i, j)`` is ``bhat[phi(i), phi(j)]``."""
    bhat = np.asarray(bhat, dtype=float)
    if bhat.shape != (phi.n_clusters, phi.n_clusters):
        raise DimensionMismatch(f"expected {phi.n_clusters}x{phi.n_clusters}, got {bhat.shape}")
    a = phi.assignment
    return bhat[np.ix_(a, a)]


def restrict(phi: ClusterMap, b) -> np.ndarray:
    """``M~* b = M* b M``: sum of ``b`` over each pair of blocks."""
    b = np.asarray(b, dtype=float)
    if b.shape != (phi.n, phi.n):
        raise DimensionMismatch(f"expected {phi.n}x{phi.n}, got {b.shape}")
    return _restrict(b, phi)


class EdgeReconstruction:
    """Weighted reconstruction ``N~ = Q_mhat^{-1} M~* Q_m`` and its adjoint.

    Block pairs with ``mhat == 0`` carry no weight; ``N~`` returns 0 there.
    """

    def __init__(self, phi: ClusterMap, m, m_hat=None, tol: float = STRUCT_TOL):
        m = np.asarray(m, dtype=float)
        if np.any(m < 0):
            raise WeightMismatch("edge weights must be nonnegative")
        expected = restrict(phi, m)
        if m_hat is None:
            m_hat = expected
        m_hat = np.asarray(m_hat, dtype=float)
        if m_hat.shape != expected.shape or np.max(np.abs(m_hat - expected)) > tol:
            raise WeightMismatch("m_hat is not the block aggregation of m")
        self.phi = phi
        self.m = _frozen(m)
        self.m_hat = _frozen(m_hat)
        self._support = m_hat > ZERO_WEIGHT
        self._inv = _frozen(np.divide(1.0, m_hat, out=np.zeros_like(m_hat),
                                      where=self._support))

    def apply(self, b) -> np.ndarray:
        """``N~ b``: m-weighted average of ``b`` over each block pair."""
        num = restrict(self.phi, self.m * np.asarray(b, dtype=float))
        if np.any(np.abs(num[~self._support]) > STRUCT_TOL):
            raise WeightDegenerate("nonzero weighted sum on a block pair with zero weight")
        return num * self._inv

    def adjoint(self, bhat) -> np.ndarray:
        """``N~* bhat = Q_m M~ Q_mhat^{-1} bhat``; maps ``m_hat`` to ``m``."""
        return self.m * lift(self.phi, np.asarray(bhat, dtype=float) * self._inv)


def edge_reconstruct_op(m, m_hat, phi: ClusterMap, tol: float = STRUCT_TOL) -> EdgeReconstruction:
    return EdgeReconstruction(phi, m, m_hat, tol)


@dataclass(frozen=True)
class IncidenceOperator:
    """Incidence operator of the complete graph on ``n`` vertices."""

    n: int

    def apply(self, x) -> np.ndarray:
        return incidence_apply(x)

    def adjoint(self, b) -> np.ndarray:
        return incidence_adjoint(b)

    def matrix(self) -> np.ndarray:
        """Dense ``n**2 x n`` matrix; row ``i*n + j`` holds ``e_i - e_j``."""
        n = self.n
        D = np.zeros((n, n, n))
        idx = np.arange(n)
        D[idx, :, idx] += 1.0
        D[:, idx, idx] -= 1.0
        return D.reshape(n * n, n)


def incidence_apply(x) -> np.ndarray:
    """``(Dx)_ij = x_i - x_j``."""
    x = np.asarray(x, dtype=float)
    return x[:, None] - x[None, :]


def incidence_adjoint(b) -> np.ndarray:
    """``(D* b)_l = sum_j b_lj - sum_j b_jl``; diagonal entries cancel."""
    b = np.asarray(b, dtype=float)
    return b.sum(axis=1) - b.sum(axis=0)


def reconstructed_incidence(phi: ClusterMap, m) -> np.ndarray:
    """Dense ``N~ D M`` as an ``nhat**2 x nhat`` matrix, column ``k`` for ``e_k``."""
    R = EdgeReconstruction(phi, m)
    cols = [R.apply(incidence_apply(phi.lift(np.eye(phi.n_clusters)[k]))).ravel()
            for k in range(phi.n_clusters)]
    return np.stack(cols, axis=1)


def coarse_incidence(phi: ClusterMap, m, tol: float = STRUCT_TOL) -> IncidenceOperator:
    """Coarse incidence ``Dhat = N~ D M``, verified against the canonical one.

    The comparison covers the diagonal and every block pair with positive
    weight; pairs without weight are not edges of the coarse graph.
    """
    nhat = phi.n_clusters
    got = reconstructed_incidence(phi, m).reshape(nhat, nhat, nhat)
    canon = IncidenceOperator(nhat).matrix().reshape(nhat, nhat, nhat)
    support = restrict(phi, m) > ZERO_WEIGHT
    np.fill_diagonal(support, True)
    err = np.max(np.abs(got - canon)[support]) if nhat else 0.0
    if err > tol:
        raise WeightDegenerate(f"N~ D M deviates from the coarse incidence by {err:.3e}")
    return IncidenceOperator(nhat)


@dataclass(frozen=True, eq=False)
class QuotientGraph:
    """Directed graph on partition blocks; intra-block edges are dropped."""

    n_blocks: int
    edges: tuple
    assignment: tuple

    def adjacency(self) -> np.ndarray:
        adj = np.zeros((self.n_blocks, self.n_blocks), dtype=bool)
        for k, l in self.edges:
            adj[k, l] = True
        return adj

    def symmetrized(self) -> frozenset:
        """Undirected view: unordered block pairs joined in either direction."""
        return frozenset(frozenset(e) for e in self.edges)

    def to_json(self) -> dict:
        return {
            "n_blocks": self.n_blocks,
            "assignment": list(self.assignment),
            "edges": [list(e) for e in self.edges],
        }


def quotient_graph(K, phi: ClusterMap, threshold: float = 0.0) -> QuotientGraph:
    K = np.asarray(K, dtype=float)
    if K.shape != (phi.n, phi.n):
        raise DimensionMismatch(f"K is {K.shape}, partition has {phi.n} states")
    hits = restrict(phi, (K > threshold).astype(float)) > 0
    np.fill_diagonal(hits, False)
    edges = tuple((int(k), int(l)) for k, l in zip(*np.nonzero(hits)))
    return QuotientGraph(phi.n_clusters, edges, tuple(int(v) for v in phi.assignment))
