"""Energy functionals, Dirichlet forms and Poincare/log-Sobolev constants.

The energy of a convex profile ``Phi`` is the Jensen gap
``E_Phi(x) = E_pi Phi(x) - Phi(E_pi x)``.  Poincare-type constants are
infima of ``D_K(x) / E_Phi(x)``; for the quadratic profile this is a
generalized symmetric eigenproblem, otherwise a multi-start minimization
whose result is an upper bound certified by the returned minimizer.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg
import scipy.optimize
from scipy.sparse.csgraph import connected_components

from .coarse import ClusterMap, CoarseGrainPair, build_M, build_N, coarse_generator, coarse_markov
from .errors import (
    DimensionMismatch,
    DomainViolation,
    IdentityViolation,
    InvariantMismatch,
    MinimizerDiverged,
    Reducible,
)
from .markov import SPECTRAL_TOL, invariance_residual, validate_markov

log = logging.getLogger(__name__)

MONOTONE_TOL = 1e-9
FLOOR = 1e-12


@dataclass(frozen=True)
class ConvexProfile:
    """A strictly convex, nonnegative scalar profile ``Phi``.

    ``lower`` is the left end of the domain (``None`` for the whole line).
    """

    name: str
    func: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    lower: float | None = None

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if self.lower is not None and np.any(r < self.lower):
            raise DomainViolation(f"{self.name} is defined only for r >= {self.lower}")
        return self.func(r)

    def certify(self, n_pairs: int = 1000, span: float = 10.0, seed: int = 0,
                delta: float = 0.0) -> bool:
        """Sampled check of strict midpoint convexity and nonnegativity.

        A guardrail, not a proof.
        """
        rng = np.random.default_rng(seed)
        lo = self.lower if self.lower is not None else -span
        r, s = rng.uniform(lo, lo + 2 * span if self.lower is None else span, (2, n_pairs))
        mid = self.func((r + s) / 2)
        avg = (self.func(r) + self.func(s)) / 2
        far = np.abs(r - s) > 1e-6
        convex = np.all(mid[far] < avg[far] - delta)
        return bool(convex and np.all(self.func(np.concatenate([r, s])) >= 0))


def _xlogx(r):
    return np.where(r > 0, r * np.log(np.where(r > 0, r, 1.0)), 0.0)


QUADRATIC = ConvexProfile("quadratic", lambda r: 0.5 * r**2)
BOLTZMANN = ConvexProfile("boltzmann", lambda r: _xlogx(r) - r + 1.0, lower=0.0)

# Test functions for log-Sobolev inequalities: convex, g >= 0, g(0) = 0.
SQUARE = ConvexProfile("square", lambda r: r**2)
QUARTIC = ConvexProfile("quartic", lambda r: r**4)
SMOOTH_ABS_15 = ConvexProfile(
    "smooth_abs_1.5", lambda r: (r**2 + 1e-2) ** 0.75 - 1e-2**0.75)

PROFILES = {p.name: p for p in (QUADRATIC, BOLTZMANN, SQUARE, QUARTIC, SMOOTH_ABS_15)}


def profile_by_name(name: str) -> ConvexProfile:
    try:
        return PROFILES[name]
    except KeyError:
        raise KeyError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}") from None


def expectation(x, pi) -> float:
    x = np.asarray(x, dtype=float)
    pi = np.asarray(pi, dtype=float)
    if x.shape != pi.shape:
        raise DimensionMismatch(f"{x.shape} vs {pi.shape}")
    return float(x @ pi)


def energy(x, pi, profile: ConvexProfile = QUADRATIC) -> float:
    """Jensen gap ``E_pi Phi(x) - Phi(E_pi x)``."""
    x = np.asarray(x, dtype=float)
    return expectation(profile(x), pi) - float(profile(expectation(x, pi)))


def entropy(x, pi) -> float:
    """Relative entropy functional ``Ent_pi(x)`` (Boltzmann profile)."""
    return energy(x, pi, BOLTZMANN)


def dirichlet(x, K, pi, tol: float = SPECTRAL_TOL) -> float:
    """``D_K(x) = 1/2 sum_ij pi_i K_ij (x_i - x_j)**2``."""
    r = invariance_residual(K, pi)
    if r > tol:
        raise InvariantMismatch(f"||K* pi - pi||_inf = {r:.3e} exceeds {tol:.1e}")
    x = np.asarray(x, dtype=float)
    m = np.asarray(pi)[:, None] * np.asarray(K)
    return float(0.5 * np.sum(m * (x[:, None] - x[None, :]) ** 2))


def generator_dirichlet(x, A, pi) -> float:
    """``-<x . A x, pi>``; equals the Dirichlet form for reversible generators."""
    x = np.asarray(x, dtype=float)
    return float(-np.sum(x * (np.asarray(A) @ x) * np.asarray(pi))) + 0.0


def coarse_dirichlet_pullback(x_hat, K, pair: CoarseGrainPair, tol: float = 1e-12):
    """Both sides of ``D_K(M x_hat) = D_Khat(x_hat)``; raises if they differ."""
    K_hat = coarse_markov(K, pair)
    fine = dirichlet(pair.phi.lift(x_hat), K, pair.pi)
    coarse = dirichlet(x_hat, K_hat, pair.pi_hat)
    if abs(fine - coarse) > tol * max(1.0, abs(fine)):
        raise IdentityViolation(f"D_K(M x) = {fine!r} but D_Khat(x) = {coarse!r}")
    return fine, coarse


# -- constants ---------------------------------------------------------------


@dataclass(eq=False)
class SpectralReport:
    kind: str
    profile: str
    method: str
    lam: float
    minimizer: np.ndarray | None
    gap: float | None = None
    iterations: int = 0
    lam_hat: float | None = None
    minimizer_hat: np.ndarray | None = None
    gap_hat: float | None = None

    @property
    def monotone(self) -> bool | None:
        if self.lam_hat is None:
            return None
        return bool(self.lam <= self.lam_hat + MONOTONE_TOL)

    def to_json(self) -> dict:
        def vec(v):
            return None if v is None else np.asarray(v).tolist()

        return {
            "kind": self.kind, "profile": self.profile, "method": self.method,
            "lambda": self.lam, "lambda_hat": self.lam_hat,
            "gap": self.gap, "gap_hat": self.gap_hat,
            "minimizer": vec(self.minimizer), "minimizer_hat": vec(self.minimizer_hat),
            "iterations": self.iterations, "monotone": self.monotone,
        }


def _require_irreducible(K):
    K = np.asarray(K)
    ncomp, _ = connected_components(K > 0, directed=True, connection="strong")
    if ncomp > 1:
        raise Reducible(f"chain splits into {ncomp} communicating classes")


def _generalized_spectrum(K, pi):
    """Eigenpairs of ``L v = mu Q_pi v`` with ``L`` the symmetrized Dirichlet matrix."""
    pi = np.asarray(pi, dtype=float)
    m = pi[:, None] * np.asarray(K, dtype=float)
    s = 0.5 * (m + m.T)
    L = np.diag(s.sum(axis=1)) - s
    return scipy.linalg.eigh(L, np.diag(pi))


def spectral_gap(K, pi) -> tuple[float, np.ndarray]:
    """Smallest nonzero ``D_K(x) / Var_pi(x)`` and its eigenvector."""
    _require_irreducible(K)
    w, V = _generalized_spectrum(K, pi)
    if len(w) < 2:
        return float("inf"), np.ones(1)
    return float(w[1]), V[:, 1]


def _num_grad(f, x, h=1e-6):
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def _minimize_ratio(num, den, pi, lower, starts, rng, seeds=(), direction=None):
    """Multi-start minimization of ``num(x) / den(x)`` on ``E_pi x = 1``.

    Points with ``den(x) < FLOOR * |x|**2`` are excluded.  Returns
    ``(value, minimizer, evaluations)``; the value is re-evaluated at the
    minimizer, so it is a genuine upper bound for the infimum.
    """
    n = pi.size

    def ratio(x):
        d = den(x)
        if not np.isfinite(d) or d < FLOOR * max(1.0, x @ x):
            return np.inf
        return num(x) / d

    def objective(x):
        if lower is not None:
            x = np.maximum(x, lower)
        d = den(x)
        return num(x) / max(d, FLOOR * max(1.0, x @ x))

    candidates = [np.asarray(s, dtype=float) for s in seeds]
    if direction is not None:
        v = direction / np.max(np.abs(direction))
        for delta in (1e-2, 1e-1, 0.5):
            candidates += [1.0 + delta * v, 1.0 - delta * v]
    for _ in range(starts):
        y = 1.0 + rng.standard_normal(n)
        if lower is not None:
            y = np.abs(y)
        candidates.append(y / (y @ pi))

    bounds = None if lower is None else [(lower, None)] * n
    constraint = {"type": "eq", "fun": lambda x: x @ pi - 1.0, "jac": lambda x: pi}
    best_val, best_x, nfev = np.inf, None, 0
    for x0 in candidates:
        val0 = ratio(x0)
        if val0 < best_val:
            best_val, best_x = val0, x0
        if n < 2:
            continue
        res = scipy.optimize.minimize(
            objective, x0, jac=lambda x: _num_grad(objective, x), method="SLSQP",
            bounds=bounds, constraints=[constraint],
            options={"ftol": 1e-10, "maxiter": 500})
        nfev += res.nfev
        x = res.x if lower is None else np.maximum(res.x, lower)
        val = ratio(x)
        if val < best_val:
            best_val, best_x = val, x
    if best_x is None or not np.isfinite(best_val):
        if n < 2:
            return float("inf"), None, nfev
        raise MinimizerDiverged("no start reached a point with nonzero energy")
    return float(best_val), best_x, nfev


def _is_quadratic(profile):
    return profile is QUADRATIC or profile.name == "quadratic"


def _poincare_single(K, pi, profile, method, starts, seed, seeds=()):
    _require_irreducible(K)
    gap, v = spectral_gap(K, pi)
    if method == "auto":
        method = "eigen" if _is_quadratic(profile) else "minimize"
    if method == "eigen":
        if not _is_quadratic(profile):
            raise ValueError("the eigen method applies to the quadratic profile only")
        # E_{r^2/2} is half the variance
        return 2.0 * gap, v, gap, 0, method
    rng = np.random.default_rng(seed)
    val, x, nfev = _minimize_ratio(
        lambda x: dirichlet(x, K, pi), lambda x: energy(x, pi, profile),
        np.asarray(pi, dtype=float), profile.lower, starts, rng, seeds,
        v if len(v) > 1 else None)
    return val, x, gap, nfev, method


def poincare_constant(K, pi, profile: ConvexProfile = QUADRATIC, *, pair=None,
                      method: str = "auto", starts: int = 20, seed: int = 42) -> SpectralReport:
    """Largest ``c`` with ``D_K(x) >= c E_Phi(x)``, optionally for the coarse chain too.

    With ``pair`` the coarse constant is computed first and its lifted
    minimizer seeds the fine search.
    """
    validate_markov(K)
    lam_hat = x_hat = gap_hat = None
    seeds = ()
    total = 0
    if pair is not None:
        K_hat = coarse_markov(K, pair)
        lam_hat, x_hat, gap_hat, it, _ = _poincare_single(
            K_hat, pair.pi_hat, profile, method, starts, seed)
        total += it
        if x_hat is not None:
            seeds = (pair.phi.lift(x_hat),)
    lam, x, gap, it, used = _poincare_single(K, pi, profile, method, starts, seed, seeds)
    total += it
    log.debug("poincare %s: lambda=%g lambda_hat=%s", profile.name, lam, lam_hat)
    return SpectralReport("poincare", profile.name, used, lam, x, gap, total,
                          lam_hat, x_hat, gap_hat)


def _log_sobolev_single(K, pi, g, starts, seed, seeds=()):
    _require_irreducible(K)
    _, v = spectral_gap(K, pi)
    rng = np.random.default_rng(seed)
    pi = np.asarray(pi, dtype=float)
    return _minimize_ratio(
        lambda x: dirichlet(x, K, pi), lambda x: entropy(g(x), pi),
        pi, g.lower, starts, rng, seeds, v if len(v) > 1 else None)


def log_sobolev_constant(K, pi, g: ConvexProfile = SQUARE, *, pair=None,
                         starts: int = 20, seed: int = 42) -> SpectralReport:
    """Numerical infimum of ``D_K(x) / Ent_pi(g(x))`` with minimizer certificate."""
    validate_markov(K)
    lam_hat = x_hat = None
    seeds = ()
    total = 0
    if pair is not None:
        K_hat = coarse_markov(K, pair)
        lam_hat, x_hat, it = _log_sobolev_single(K_hat, pair.pi_hat, g, starts, seed)
        total += it
        if x_hat is not None:
            seeds = (pair.phi.lift(x_hat),)
    lam, x, it = _log_sobolev_single(K, pi, g, starts, seed, seeds)
    total += it
    report = SpectralReport("log_sobolev", g.name, "minimize", lam, x, None, total,
                            lam_hat, x_hat)
    if report.monotone is False:
        raise IdentityViolation(f"log-Sobolev constants not monotone: {lam} > {lam_hat}")
    return report


# -- counterexample family ---------------------------------------------------

CROSSOVER = 1.0 + np.sqrt(3.0)
COUNTEREXAMPLE_X = np.array([3.0, 1.0, 2.0])
COUNTEREXAMPLE_PHI = np.array([0, 1, 1])


def counterexample_generator(a: float) -> np.ndarray:
    return np.array([[-8.0, 4.0, 4.0], [1.0, -2.0, 1.0], [a, a, -2.0 * a]])


def counterexample_measure(a: float) -> np.ndarray:
    return np.array([a, 4.0 * a, 4.0]) / (5.0 * a + 4.0)


def counterexample_chain(a: float, tau: float = 1.0 / 16.0) -> np.ndarray:
    """Markov matrix ``I + tau A_a``; row-stochastic while ``tau * max(8, 2a) <= 1``."""
    return validate_markov(np.eye(3) + tau * counterexample_generator(a))


@dataclass(frozen=True)
class CounterexampleRow:
    a: float
    dk: float
    dk_hat: float
    dk_closed: float
    dk_hat_closed: float

    @property
    def sign(self) -> int:
        return int(np.sign(self.dk - self.dk_hat))


def _closed_forms(a):
    dk = 24.0 * a / (5.0 * a + 4.0)
    dk_hat = 8.0 * a * (1.0 + 2.0 * a) ** 2 / ((a + 1.0) ** 2 * (5.0 * a + 4.0))
    return dk, dk_hat


def counterexample(a: float, tol: float = 1e-10) -> CounterexampleRow:
    """Dirichlet forms ``D_K(x)`` and ``D_Khat(N x)`` at ``x = (3, 1, 2)``.

    Both values come from the operator pipeline (``N``, ``Ahat = N A M``)
    and are checked against the closed forms.
    """
    if a < 0:
        raise ValueError("a must be nonnegative")
    A = counterexample_generator(a)
    pi = counterexample_measure(a)
    x = COUNTEREXAMPLE_X
    dk = generator_dirichlet(x, A, pi)
    if a > 0:
        pair = CoarseGrainPair.from_partition(COUNTEREXAMPLE_PHI, pi)
        A_hat = coarse_generator(A, pair)
        dk_hat = generator_dirichlet(pair.apply_N(x), A_hat, pair.pi_hat)
    else:
        # state 0 carries no mass at a = 0; its row of N is irrelevant
        M = build_M(ClusterMap.from_assignment(COUNTEREXAMPLE_PHI))
        pi_hat = M.T @ pi
        with np.errstate(invalid="ignore", divide="ignore"):
            N = np.nan_to_num(build_N(M, pi), nan=1.0)
        dk_hat = generator_dirichlet(N @ x, N @ A @ M, pi_hat)
    dk_c, dk_hat_c = _closed_forms(a)
    if abs(dk - dk_c) > tol or abs(dk_hat - dk_hat_c) > tol:
        raise IdentityViolation(
            f"a={a}: pipeline ({dk}, {dk_hat}) vs closed form ({dk_c}, {dk_hat_c})")
    return CounterexampleRow(float(a), dk, dk_hat, dk_c, dk_hat_c)


def crossover(lo: float = 1.0, hi: float = 4.0, xtol: float = 1e-12) -> float:
    """Bisect the sign change of ``D_K(x) - D_Khat(N x)`` in ``[lo, hi]``."""
    def f(a):
        row = counterexample(a)
        return row.dk - row.dk_hat

    return float(scipy.optimize.bisect(f, lo, hi, xtol=xtol))


def counterexample_table(a_min: float = 0.0, a_max: float = 5.0, steps: int = 11):
    return [counterexample(a) for a in np.linspace(a_min, a_max, steps)]
