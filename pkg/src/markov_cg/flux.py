"""Gradient-flow form of reversible dynamics and flux reconstruction.

For a chain in detailed balance the forward equation ``c' = A* c`` splits
into the continuity equation ``c' = -D* b`` and the constitutive law
``b = 1/2 Q_m D rho`` with ``rho = c / pi``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg

from .coarse import CoarseGrainPair, coarse_markov
from .errors import FredholmViolation, NotReversible, SolverFailure, StepTooLarge
from .markov import is_detailed_balance
from .tensor import (
    EdgeReconstruction,
    IncidenceOperator,
    incidence_adjoint,
    incidence_apply,
    restrict,
)

REVERSIBILITY_TOL = 1e-10
FREDHOLM_WARN = 1e-10
FREDHOLM_FAIL = 1e-8
SOLVER_TOL = 1e-8
RANK_TOL = 1e-10


def _require_reversible(K, pi, tol=REVERSIBILITY_TOL):
    if not is_detailed_balance(K, pi, tol):
        raise NotReversible(f"chain violates detailed balance at tolerance {tol:.0e}")


def _weights(K, pi):
    return np.asarray(pi, dtype=float)[:, None] * np.asarray(K, dtype=float)


@dataclass(frozen=True, eq=False)
class ContinuityState:
    t: float
    c: np.ndarray
    rho: np.ndarray
    b: np.ndarray

    def to_record(self) -> dict:
        return {"t": self.t, "c": self.c.tolist(), "b_norm": float(np.max(np.abs(self.b)))}


@dataclass(frozen=True, eq=False)
class FluxReconstruction:
    b1: np.ndarray
    b2: np.ndarray
    x_star: np.ndarray
    residual: float
    fredholm: float
    kernel_residual: float

    @property
    def b(self) -> np.ndarray:
        return self.b1 + self.b2


def gradient_flow_rhs(c, K, pi) -> np.ndarray:
    """``-1/2 D* Q_m D Q_pi^{-1} c``, equal to ``A* c`` for reversible ``K``."""
    return -incidence_adjoint(flux_of(c, K, pi))


def flux_of(c, K, pi) -> np.ndarray:
    """Flux ``b_ij = 1/2 m_ij (rho_i - rho_j)`` of the concentration ``c``."""
    _require_reversible(K, pi)
    rho = np.asarray(c, dtype=float) / np.asarray(pi, dtype=float)
    return 0.5 * _weights(K, pi) * incidence_apply(rho)


def coarse_evolution_step(c_hat, K_hat, pi_hat):
    """Rate ``c_hat'`` and flux ``b_hat`` of the coarse gradient flow."""
    b_hat = flux_of(c_hat, K_hat, pi_hat)
    return -incidence_adjoint(b_hat), b_hat


def reconstruct_flux(b_hat, pair: CoarseGrainPair, m) -> FluxReconstruction:
    """Lift a coarse flux to a fine flux closing the fine continuity equation.

    ``b1 = N~* b_hat`` and ``b2`` is the minimum-norm solution of
    ``D* b2 = N* Dhat* b_hat - D* b1``; the right-hand side is orthogonal to
    the constants, which span the kernel of ``D``.
    """
    b_hat = np.asarray(b_hat, dtype=float)
    R = EdgeReconstruction(pair.phi, m)
    b1 = R.adjoint(b_hat)
    x_star = pair.apply_Nt(incidence_adjoint(b_hat)) - incidence_adjoint(b1)
    fredholm = abs(float(x_star.sum()))
    if fredholm > FREDHOLM_FAIL:
        raise FredholmViolation(f"<1, x*> = {fredholm:.3e}; inputs are inconsistent")
    n = pair.n
    Dt = IncidenceOperator(n).matrix().T
    sol, *_ = scipy.linalg.lstsq(Dt, x_star, cond=RANK_TOL, lapack_driver="gelsy")
    b2 = sol.reshape(n, n)
    residual = float(np.max(np.abs(incidence_adjoint(b2) - x_star)))
    if residual > SOLVER_TOL:
        raise SolverFailure(f"least-squares residual {residual:.3e}")
    kernel = float(np.max(np.abs(incidence_adjoint(restrict(pair.phi, b2)))))
    return FluxReconstruction(b1, b2, x_star, residual, fredholm, kernel)


def evolve(c0, K, pi, t_end: float, dt: float, method: str = "euler") -> list[ContinuityState]:
    """Integrate ``c' = A* c`` on ``[0, t_end]`` with step ``dt``.

    ``method="euler"`` takes explicit steps and requires
    ``dt <= 1 / max|A_ii|``; ``method="expm"`` uses the exact propagator.
    """
    _require_reversible(K, pi)
    K = np.asarray(K, dtype=float)
    A = K - np.eye(K.shape[0])
    rate = np.max(np.abs(np.diag(A)))
    if dt <= 0:
        raise StepTooLarge("dt must be positive")
    if method == "euler":
        if rate > 0 and dt > 1.0 / rate:
            raise StepTooLarge(f"dt={dt} exceeds the positivity bound {1.0 / rate:.3e}")
        step = np.eye(K.shape[0]) + dt * A.T
    elif method == "expm":
        step = scipy.linalg.expm(dt * A.T)
    else:
        raise ValueError(f"unknown method {method!r}")

    pi = np.asarray(pi, dtype=float)
    c = np.asarray(c0, dtype=float)
    n_steps = int(round(t_end / dt))
    out = []
    for k in range(n_steps + 1):
        out.append(ContinuityState(k * dt, c, c / pi, flux_of(c, K, pi)))
        c = step @ c
    return out


def write_trajectory(path, states) -> None:
    with Path(path).open("w") as fh:
        for s in states:
            fh.write(json.dumps(s.to_record()) + "\n")


def flux_report(K, pair: CoarseGrainPair, c_hat0, t_end: float, dt: float) -> dict:
    """Coarse evolution from ``c_hat0`` with per-step flux reconstruction."""
    K = np.asarray(K, dtype=float)
    _require_reversible(K, pair.pi)
    K_hat = coarse_markov(K, pair)
    m = _weights(K, pair.pi)
    R = EdgeReconstruction(pair.phi, m)
    traj = evolve(c_hat0, K_hat, pair.pi_hat, t_end, dt)
    rows = []
    worst = dict(equilibration=0.0, reconstruction=0.0, fredholm=0.0, kernel=0.0, continuity=0.0)
    for s in traj:
        rate_hat, b_hat = coarse_evolution_step(s.c, K_hat, pair.pi_hat)
        c = pair.apply_Nt(s.c)
        rec = reconstruct_flux(b_hat, pair, m)
        equil = float(np.max(np.abs(flux_of(c, K, pair.pi) - R.adjoint(b_hat))))
        cont = float(np.max(np.abs(-incidence_adjoint(rec.b) - pair.apply_Nt(rate_hat))))
        worst["equilibration"] = max(worst["equilibration"], equil)
        worst["reconstruction"] = max(worst["reconstruction"], rec.residual)
        worst["fredholm"] = max(worst["fredholm"], rec.fredholm)
        worst["kernel"] = max(worst["kernel"], rec.kernel_residual)
        worst["continuity"] = max(worst["continuity"], cont)
        rows.append({"t": s.t, "c_hat": s.c.tolist(),
                     "b_hat_norm": float(np.max(np.abs(b_hat))),
                     "b2_norm": float(np.max(np.abs(rec.b2)))})
    return {"K_hat": K_hat.tolist(), "pi_hat": pair.pi_hat.tolist(),
            "trajectory": rows, "max_residuals": worst}

