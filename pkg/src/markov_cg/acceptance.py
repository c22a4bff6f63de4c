"""Exit criteria of the library, runnable headlessly (``markov-cg selftest``)."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .coarse import ClusterMap, CoarseGrainPair, build_M, build_N, coarse_markov
from .flux import gradient_flow_rhs, reconstruct_flux
from .functionals import (
    BOLTZMANN,
    CROSSOVER,
    QUADRATIC,
    QUARTIC,
    SMOOTH_ABS_15,
    SQUARE,
    counterexample,
    crossover,
    dirichlet,
    energy,
    entropy,
    poincare_constant,
)
from .markov import invariant_measure
from .sampling import random_chain, random_partition, random_prob, random_reversible_chain
from .tensor import (
    IncidenceOperator,
    incidence_apply,
    lift,
    reconstructed_incidence,
    restrict,
)


@dataclass
class Result:
    number: int
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.number:2d} {self.name}: {self.detail}"


def _maxabs(a) -> float:
    return float(np.max(np.abs(a))) if np.size(a) else 0.0


def operator_identities(seed: int = 42) -> Result:
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(1, 13))
        pair = CoarseGrainPair(random_partition(rng, n), random_prob(rng, n))
        worst = max(worst, max(pair.residuals().values()))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and elapsed < 5.0
    return Result(1, "operator identities", ok, f"max residual {worst:.2e}, {elapsed:.2f}s")


def closed_form_N(seed: int = 42) -> Result:
    M = build_M(ClusterMap.from_assignment([0, 1, 1]))
    N = build_N(M, [0.2, 0.3, 0.5])
    err = _maxabs(N - np.array([[1.0, 0.0, 0.0], [0.0, 0.375, 0.625]]))
    return Result(2, "closed-form N", err <= 1e-15, f"max deviation {err:.2e}")


def coarse_chain_suite(seed: int = 42) -> Result:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 11))
        K, pi = random_reversible_chain(rng, n, density=rng.uniform(0.3, 1.0))
        pair = CoarseGrainPair(random_partition(rng, n), pi)
        Kh = coarse_markov(K, pair)
        mh = pair.pi_hat[:, None] * Kh
        worst = max(worst, _maxabs(Kh.sum(axis=1) - 1.0), _maxabs(Kh.T @ pair.pi_hat - pair.pi_hat),
                    _maxabs(mh - mh.T), -min(0.0, float(Kh.min())))
    return Result(3, "coarse chain", worst <= 1e-11, f"max residual {worst:.2e}")


def tensor_suite(seed: int = 42) -> Result:
    rng = np.random.default_rng(seed)
    worst = {"restrict": 0.0, "Dhat": 0.0, "MDhat": 0.0}
    for trial in range(50):
        n = int(rng.integers(1, 9))
        phi = random_partition(rng, n)
        if trial % 2:
            K, pi = random_reversible_chain(rng, n)
        else:
            K = random_chain(rng, n)
            pi = invariant_measure(K)
        pair = CoarseGrainPair(phi, pi)
        Kh = coarse_markov(K, pair)
        worst["restrict"] = max(worst["restrict"],
                                _maxabs(restrict(phi, pi[:, None] * K) - pair.pi_hat[:, None] * Kh))
        m = rng.random((n, n)) + 0.01
        nh = phi.n_clusters
        Dhat = reconstructed_incidence(phi, m)
        worst["Dhat"] = max(worst["Dhat"], _maxabs(Dhat - IncidenceOperator(nh).matrix()))
        for _ in range(2):
            xh = rng.standard_normal(nh)
            lhs = lift(phi, (Dhat @ xh).reshape(nh, nh))
            worst["MDhat"] = max(worst["MDhat"], _maxabs(lhs - incidence_apply(phi.lift(xh))))
    ok = max(worst.values()) <= 1e-12
    return Result(4, "tensor coarse-graining", ok,
                  ", ".join(f"{k} {v:.2e}" for k, v in worst.items()))


def gradient_flow_identity(seed: int = 42) -> Result:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 11))
        K, pi = random_reversible_chain(rng, n, density=rng.uniform(0.3, 1.0))
        c = rng.standard_normal(n)
        A = K - np.eye(n)
        worst = max(worst, _maxabs(A.T @ c - gradient_flow_rhs(c, K, pi)))
    return Result(5, "gradient-flow identity", worst <= 1e-10, f"max residual {worst:.2e}")


def flux_reconstruction(seed: int = 42) -> Result:
    rng = np.random.default_rng(seed)
    worst = {"fredholm": 0.0, "lstsq": 0.0, "kernel": 0.0, "linearity": 0.0}
    for _ in range(50):
        n = int(rng.integers(2, 9))
        K, pi = random_reversible_chain(rng, n)
        pair = CoarseGrainPair(random_partition(rng, n), pi)
        m = pi[:, None] * K
        nh = pair.n_hat
        b1, b2 = rng.standard_normal((2, nh, nh))
        alpha, beta = rng.standard_normal(2)
        r1 = reconstruct_flux(b1, pair, m)
        r2 = reconstruct_flux(b2, pair, m)
        r12 = reconstruct_flux(alpha * b1 + beta * b2, pair, m)
        for r in (r1, r2, r12):
            worst["fredholm"] = max(worst["fredholm"], r.fredholm)
            worst["lstsq"] = max(worst["lstsq"], r.residual)
            worst["kernel"] = max(worst["kernel"], r.kernel_residual)
        worst["linearity"] = max(worst["linearity"], _maxabs(r12.b2 - alpha * r1.b2 - beta * r2.b2))
    ok = (worst["fredholm"] <= 1e-10 and worst["lstsq"] <= 1e-8
          and worst["kernel"] <= 1e-10 and worst["linearity"] <= 1e-10)
    return Result(6, "flux reconstruction", ok, ", ".join(f"{k} {v:.2e}" for k, v in worst.items()))


def functional_inequalities(seed: int = 42) -> Result:
    rng = np.random.default_rng(seed)
    worst = {"pullback": 0.0, "contraction": 0.0, "entropy": 0.0, "dirichlet": 0.0}
    for trial in range(100):
        n = int(rng.integers(2, 11))
        K, pi = random_reversible_chain(rng, n, density=rng.uniform(0.3, 1.0))
        pair = CoarseGrainPair(random_partition(rng, n), pi)
        nh = pair.n_hat
        Kh = coarse_markov(K, pair)
        xh = rng.uniform(0.0, 3.0, nh)
        x = rng.uniform(0.0, 3.0, n)
        for prof in (QUADRATIC, BOLTZMANN, QUARTIC):
            worst["pullback"] = max(worst["pullback"], abs(
                energy(pair.phi.lift(xh), pi, prof) - energy(xh, pair.pi_hat, prof)))
            worst["contraction"] = max(worst["contraction"],
                                       energy(pair.apply_N(x), pair.pi_hat, prof) - energy(x, pi, prof))
        g = (SQUARE, QUARTIC, SMOOTH_ABS_15)[trial % 3]
        ys = rng.standard_normal(nh)
        worst["entropy"] = max(worst["entropy"],
                               entropy(g(ys), pair.pi_hat) - entropy(g(pair.phi.lift(ys)), pi))
        worst["dirichlet"] = max(worst["dirichlet"], abs(
            dirichlet(pair.phi.lift(ys), K, pi) - dirichlet(ys, Kh, pair.pi_hat)))
    ok = all(v <= 1e-12 for v in worst.values())
    return Result(7, "functional inequalities", ok, ", ".join(f"{k} {v:.2e}" for k, v in worst.items()))


def spectral_monotonicity(seed: int = 42) -> Result:
    rng = np.random.default_rng(seed)
    worst_mono = -np.inf
    for _ in range(50):
        n = int(rng.integers(2, 11))
        K, pi = random_reversible_chain(rng, n, density=rng.uniform(0.3, 1.0))
        pair = CoarseGrainPair(random_partition(rng, n, int(rng.integers(2, n + 1))), pi)
        rep = poincare_constant(K, pi, QUADRATIC, pair=pair)
        worst_mono = max(worst_mono, rep.lam - rep.lam_hat)
    worst_gap = 0.0
    for _ in range(20):
        p, q = rng.uniform(0.01, 1.0, 2)
        K = np.array([[1 - p, p], [q, 1 - q]])
        rep = poincare_constant(K, invariant_measure(K), QUADRATIC)
        worst_gap = max(worst_gap, abs(rep.gap - (p + q)))
    ok = worst_mono <= 1e-9 and worst_gap <= 1e-12
    return Result(8, "spectral monotonicity", ok,
                  f"max(lambda - lambda_hat) {worst_mono:.2e}, two-state gap error {worst_gap:.2e}")


def counterexample_reproduction(seed: int = 42) -> Result:
    t0 = time.perf_counter()
    worst = 0.0
    for a in (0.5, 1.0, 2.0, 3.0, 4.0):
        row = counterexample(a)
        worst = max(worst, abs(row.dk - row.dk_closed), abs(row.dk_hat - row.dk_hat_closed))
    a_star = crossover(1.0, 4.0)
    signs = counterexample(1.0).sign, counterexample(4.0).sign
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-10 and abs(a_star - CROSSOVER) <= 1e-6 and signs == (1, -1) and elapsed < 1.0
    return Result(9, "counterexample", ok,
                  f"closed-form error {worst:.2e}, a* = {a_star:.10f}, signs {signs}, {elapsed:.3f}s")


def uniform_pseudoinverse(seed: int = 42) -> Result:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(20):
        n = int(rng.integers(1, 13))
        phi = random_partition(rng, n)
        M = build_M(phi)
        N = build_N(M, np.full(n, 1.0 / n))
        worst = max(worst, _maxabs(N - np.linalg.inv(M.T @ M) @ M.T))
    return Result(10, "uniform-measure pseudoinverse", worst <= 1e-12, f"max deviation {worst:.2e}")


CRITERIA = (
    operator_identities,
    closed_form_N,
    coarse_chain_suite,
    tensor_suite,
    gradient_flow_identity,
    flux_reconstruction,
    functional_inequalities,
    spectral_monotonicity,
    counterexample_reproduction,
    uniform_pseudoinverse,
)


def run_all(seed: int = 42) -> list[Result]:
    return [crit(seed) for crit in CRITERIA]

