import json

import numpy as np
import pytest
import scipy.linalg

from conftest import reversible_instances
from markov_cg.coarse import ClusterMap, CoarseGrainPair, coarse_markov
from markov_cg.errors import NotReversible, StepTooLarge
from markov_cg.flux import (
    coarse_evolution_step,
    evolve,
    flux_of,
    flux_report,
    gradient_flow_rhs,
    reconstruct_flux,
    write_trajectory,
)
from markov_cg.functionals import counterexample_chain, counterexample_measure
from markov_cg.markov import invariant_measure
from markov_cg.sampling import random_chain, random_prob
from markov_cg.tensor import EdgeReconstruction, incidence_adjoint, incidence_apply, restrict


def _dense_rhs(c, K, pi):
    # -1/2 D* Q_m D Q_pi^{-1} with every operator materialized
    n = len(pi)
    D = np.zeros((n * n, n))
    for i in range(n):
        for j in range(n):
            D[i * n + j, i] += 1.0
            D[i * n + j, j] -= 1.0
    Qm = np.diag((pi[:, None] * K).ravel())
    return -0.5 * D.T @ Qm @ D @ np.diag(1.0 / pi) @ c


def test_gradient_flow_identity():
    rng = np.random.default_rng(0)
    for K, pi, _ in reversible_instances(1, 100):
        c = rng.standard_normal(len(pi))
        A = K - np.eye(len(pi))
        np.testing.assert_allclose(gradient_flow_rhs(c, K, pi), A.T @ c, atol=1e-10)
    K, pi, _ = reversible_instances(2, 1)[0]
    c = rng.standard_normal(len(pi))
    np.testing.assert_allclose(gradient_flow_rhs(c, K, pi), _dense_rhs(c, K, pi), atol=1e-13)


def test_gradient_flow_examples():
    K, pi, _ = reversible_instances(3, 1)[0]
    np.testing.assert_allclose(gradient_flow_rhs(pi, K, pi), 0.0, atol=1e-16)
    K = counterexample_chain(1.0)
    pi = counterexample_measure(1.0)
    c = np.array([0.5, 0.3, 0.2])
    np.testing.assert_allclose(gradient_flow_rhs(c, K, pi), (K - np.eye(3)).T @ c, atol=1e-15)
    np.testing.assert_array_equal(gradient_flow_rhs(c, np.eye(3), pi), 0.0)


def test_non_reversible_rejected():
    K = random_chain(np.random.default_rng(0), 4)
    with pytest.raises(NotReversible):
        flux_of(np.ones(4) / 4, K, invariant_measure(K))


def test_flux_of():
    K = np.full((2, 2), 0.5)
    b = flux_of([1.0, 0.0], K, [0.5, 0.5])
    assert b[0, 1] == pytest.approx(0.25)
    np.testing.assert_allclose(b, -b.T)
    K, pi, _ = reversible_instances(4, 1)[0]
    np.testing.assert_array_equal(flux_of(pi, K, pi), 0.0)
    c = random_prob(np.random.default_rng(4), len(pi))
    np.testing.assert_allclose(-incidence_adjoint(flux_of(c, K, pi)),
                               (K - np.eye(len(pi))).T @ c, atol=1e-14)
    assert abs(incidence_adjoint(flux_of(c, K, pi)).sum()) <= 1e-12


def test_coarse_step_and_equilibration():
    rng = np.random.default_rng(5)
    for K, pi, phi in reversible_instances(5, 30):
        pair = CoarseGrainPair(phi, pi)
        Kh = coarse_markov(K, pair)
        rate, bh = coarse_evolution_step(pair.pi_hat, Kh, pair.pi_hat)
        np.testing.assert_allclose(bh, 0.0, atol=1e-16)
        ch = random_prob(rng, pair.n_hat)
        rate, bh = coarse_evolution_step(ch, Kh, pair.pi_hat)
        c = pair.apply_Nt(ch)
        b = flux_of(c, K, pi)
        R = EdgeReconstruction(phi, pi[:, None] * K)
        np.testing.assert_allclose(b, R.adjoint(bh), atol=1e-10)
        np.testing.assert_allclose(restrict(phi, b), bh, atol=1e-10)
        np.testing.assert_allclose(rate, (Kh - np.eye(pair.n_hat)).T @ ch, atol=1e-12)


def _min_norm_oracle(x_star):
    # D*D = 2(n I - 1 1^T) on the complete graph, so D x / (2n) is the
    # minimum-norm preimage of any x orthogonal to the constants
    return incidence_apply(x_star) / (2 * len(x_star))


def test_reconstruction_matches_closed_form():
    rng = np.random.default_rng(6)
    for K, pi, phi in reversible_instances(6, 20):
        pair = CoarseGrainPair(phi, pi)
        m = pi[:, None] * K
        # coarse fluxes live on the support of the coarse weights
        bh = rng.standard_normal((pair.n_hat, pair.n_hat)) * (restrict(phi, m) > 0)
        rec = reconstruct_flux(bh, pair, m)
        np.testing.assert_allclose(rec.b2, _min_norm_oracle(rec.x_star), atol=1e-12)
        assert rec.fredholm <= 1e-10
        assert rec.kernel_residual <= 1e-10
        np.testing.assert_allclose(incidence_adjoint(rec.b),
                                   pair.apply_Nt(incidence_adjoint(bh)), atol=1e-8)
        # x* against the dense operators
        N = pair.N
        x_dense = N.T @ incidence_adjoint(bh) - incidence_adjoint(rec.b1)
        np.testing.assert_allclose(rec.x_star, x_dense, atol=1e-14)


def test_flux_off_coarse_support_breaks_kernel_condition():
    K = np.eye(4)
    K[:2, :2] = 0.5
    K[2:, 2:] = 0.5
    pi = np.full(4, 0.25)
    pair = CoarseGrainPair(ClusterMap.from_assignment([0, 0, 1, 1]), pi)
    bh = np.array([[0.0, 1.0], [-1.0, 0.0]])
    rec = reconstruct_flux(bh, pair, pi[:, None] * K)
    np.testing.assert_array_equal(rec.b1, 0.0)
    assert rec.kernel_residual > 0.1


def test_reconstruction_zero_and_linear():
    K, pi, phi = reversible_instances(7, 1, n_min=4)[0]
    pair = CoarseGrainPair(phi, pi)
    m = pi[:, None] * K
    nh = pair.n_hat
    rec = reconstruct_flux(np.zeros((nh, nh)), pair, m)
    np.testing.assert_array_equal(rec.b1, 0.0)
    np.testing.assert_allclose(rec.b2, 0.0, atol=1e-300)
    rng = np.random.default_rng(7)
    for _ in range(20):
        b1, b2 = rng.standard_normal((2, nh, nh))
        a, b = rng.standard_normal(2)
        lhs = reconstruct_flux(a * b1 + b * b2, pair, m).b2
        rhs = a * reconstruct_flux(b1, pair, m).b2 + b * reconstruct_flux(b2, pair, m).b2
        np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def test_reconstruction_of_coarse_dynamics():
    rng = np.random.default_rng(8)
    K, pi, phi = reversible_instances(8, 1, n_min=5)[0]
    pair = CoarseGrainPair(phi, pi)
    Kh = coarse_markov(K, pair)
    ch = random_prob(rng, pair.n_hat)
    rate, bh = coarse_evolution_step(ch, Kh, pair.pi_hat)
    rec = reconstruct_flux(bh, pair, pi[:, None] * K)
    np.testing.assert_allclose(-incidence_adjoint(rec.b), pair.apply_Nt(rate), atol=1e-12)


def test_evolve():
    K, pi, _ = reversible_instances(9, 1)[0]
    traj = evolve(pi, K, pi, 1.0, 0.1)
    for s in traj:
        np.testing.assert_allclose(s.c, pi, atol=1e-14)
    c0 = random_prob(np.random.default_rng(9), len(pi))
    traj = evolve(c0, K, pi, 0.1, 0.1)
    A = K - np.eye(len(pi))
    np.testing.assert_allclose(traj[1].c, c0 + 0.1 * A.T @ c0, atol=1e-15)
    prev = traj[0].c.sum()
    for s in evolve(c0, K, pi, 5.0, 0.5):
        assert abs(s.c.sum() - prev) <= 1e-12
        assert np.all(s.c >= 0)
    with pytest.raises(StepTooLarge):
        evolve(c0, K, pi, 1.0, 1e3)


def test_evolve_to_equilibrium():
    K, pi, _ = reversible_instances(10, 1)[0]
    w = np.sort(np.linalg.eigvals(np.eye(len(pi)) - K).real)
    gap = w[1]
    c0 = np.zeros(len(pi))
    c0[0] = 1.0
    t_end = 50.0 / gap
    traj = evolve(c0, K, pi, t_end, t_end / 4, method="expm")
    np.testing.assert_allclose(traj[-1].c, invariant_measure(K), atol=1e-12)
    exact = scipy.linalg.expm(t_end / 4 * (K - np.eye(len(pi))).T) @ c0
    np.testing.assert_allclose(traj[1].c, exact, atol=1e-14)


def test_trajectory_export(tmp_path):
    K, pi, _ = reversible_instances(11, 1)[0]
    write_trajectory(tmp_path / "t.jsonl", evolve(pi, K, pi, 0.3, 0.1))
    lines = (tmp_path / "t.jsonl").read_text().splitlines()
    assert len(lines) == 4
    rec = json.loads(lines[0])
    assert set(rec) == {"t", "c", "b_norm"}
    assert rec["b_norm"] == 0.0


def test_flux_report_stationary_and_lifted():
    K, pi, phi = reversible_instances(12, 1, n_min=4)[0]
    pair = CoarseGrainPair(phi, pi)
    rep = flux_report(K, pair, pair.pi_hat, 0.5, 0.1)
    assert all(row["b_hat_norm"] <= 1e-15 for row in rep["trajectory"])
    assert rep["max_residuals"]["kernel"] <= 1e-12
    rep = flux_report(K, pair, random_prob(np.random.default_rng(1), pair.n_hat), 0.5, 0.1)
    assert rep["max_residuals"]["equilibration"] <= 1e-10
    assert rep["max_residuals"]["continuity"] <= 1e-8
