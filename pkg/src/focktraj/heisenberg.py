"""Adjoint (Heisenberg-picture) hierarchy pi_{m,n}[X].

Each pi_{m,n} is a linear map on system operators, stored as a
``d^2 x d^2`` matrix acting on row-major ``vec(X)`` so that any X can be
read out afterwards (``vec(B X A) = (B kron A^T) vec(X)``).  The full
``(N+1) x (N+1)`` square is kept because pi_{m,n}[X]^dag = pi_{n,m}[X^dag]
pairs X with X^dag, not with itself.

Every update mirrors a Schrödinger-picture term.  A term that adds
``s sqrt(m^p n^q) A rho_{m-p,n-q} B`` to rho_{m,n} contributes
``s sqrt(n^p m^q) pi_{m-q,n-p}[B X A]`` to pi_{m,n}[X].  This is what makes

    Tr[rho_0 pi_{m,n}[X]] = Tr[X rho_{n,m}]

hold step by step for the first-order (``method="euler"``) updates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .errors import RecordError, ValidationError
from .generators import _lower_m, _lower_mn, _lower_n, dag
from .integrator import Detection, Engine, Scenario, StepOutcome, run_trajectory
from .system_model import BathChannel, FieldState, SystemOperators


def sandwich(left: np.ndarray, right: np.ndarray) -> np.ndarray:
    """Matrix of X -> left X right on row-major vec(X)."""
    return np.kron(left, right.T)


@dataclass(frozen=True)
class AdjointHierarchy:
    time: float
    n_max: int
    superops: np.ndarray              # (N+1, N+1, d^2, d^2)
    tracked: Optional[np.ndarray] = None

    @property
    def dim(self) -> int:
        return int(round(math.sqrt(self.superops.shape[-1])))

    def apply(self, X) -> np.ndarray:
        """All blocks pi_{m,n}[X], shape (N+1, N+1, d, d)."""
        d = self.dim
        v = np.asarray(X, complex).ravel()
        return (self.superops @ v).reshape(self.superops.shape[:2] + (d, d))

    def blocks(self) -> np.ndarray:
        if self.tracked is None:
            raise ValidationError("no tracked operator; use apply(X)")
        return self.apply(self.tracked)

    def _with(self, time, P):
        return AdjointHierarchy(time, self.n_max, P, self.tracked)


def init_adjoint(X, n_max: int, dim: Optional[int] = None, time: float = 0.0) -> AdjointHierarchy:
    """pi_{m,n}[.] = delta_{m,n} identity map; ``X`` is the operator to track."""
    X = None if X is None else np.asarray(X, complex)
    d = dim if dim is not None else X.shape[0]
    M = n_max + 1
    P = np.zeros((M, M, d * d, d * d), complex)
    for m in range(M):
        P[m, m] = np.eye(d * d)
    return AdjointHierarchy(time, n_max, P, X)


# ---- adjoint superoperators --------------------------------------------------------
def adjoint_generator(P, sys: SystemOperators, xi: complex, baths: Sequence[BathChannel] = ()):
    """K^dag: drift of pi_{m,n}, including the -sqrt(mn)|xi|^2 pi_{m-1,n-1}[X] term."""
    S, L, H = sys.scattering, sys.coupling, sys.hamiltonian
    Sd, Ld = dag(S), dag(L)
    I = np.eye(sys.dim)
    LdL = Ld @ L
    xc = np.conj(xi)
    out = P @ (1j * sandwich(H, I) - 1j * sandwich(I, H))          # i pi[[H, X]]
    out = out + P @ (sandwich(Ld, L) - 0.5 * sandwich(LdL, I) - 0.5 * sandwich(I, LdL))
    out = out + xi * _lower_n(P) @ (sandwich(Ld, S) - sandwich(I, Ld @ S))
    out = out + xc * _lower_m(P) @ (sandwich(Sd, L) - sandwich(Sd @ L, I))
    out = out + abs(xi) ** 2 * _lower_mn(P) @ (sandwich(Sd, S) - np.eye(sys.dim ** 2))
    for b in baths:
        for Lt, rate in ((b.coupling, b.mean_occupation + 1), (dag(b.coupling), b.mean_occupation)):
            if rate == 0:
                continue
            Ltd = dag(Lt)
            D = sandwich(Ltd, Lt) - 0.5 * sandwich(Ltd @ Lt, I) - 0.5 * sandwich(I, Ltd @ Lt)
            out = out + rate * P @ D
    return out


def adjoint_jump(P, sys: SystemOperators, xi: complex):
    """Adjoint of the count update: pi[L^dag X L] and its ladder partners."""
    S, L = sys.scattering, sys.coupling
    Sd, Ld = dag(S), dag(L)
    out = P @ sandwich(Ld, L)
    out = out + xi * _lower_n(P) @ sandwich(Ld, S)
    out = out + np.conj(xi) * _lower_m(P) @ sandwich(Sd, L)
    out = out + abs(xi) ** 2 * _lower_mn(P) @ sandwich(Sd, S)
    return out


def adjoint_conditioning(P, sys: SystemOperators, xi: complex, phase: float):
    """Unsubtracted adjoint conditioning map.

    e^{-i phi}(pi[X L] + sqrt(n) xi pi_{m,n-1}[X S])
    + e^{i phi}(pi[L^dag X] + sqrt(m) xi^* pi_{m-1,n}[S^dag X])
    """
    S, L = sys.scattering, sys.coupling
    Sd, Ld = dag(S), dag(L)
    I = np.eye(sys.dim)
    em, ep = np.exp(-1j * phase), np.exp(1j * phase)
    out = P @ (em * sandwich(I, L) + ep * sandwich(Ld, I))
    out = out + em * xi * _lower_n(P) @ sandwich(I, S)
    out = out + ep * np.conj(xi) * _lower_m(P) @ sandwich(Sd, I)
    return out


def adjoint_expectation(a: AdjointHierarchy, field: FieldState, rho0, X=None) -> complex:
    """Tr[rho_0 sum_{m,n} c*_{m,n} pi_{m,n}[X]]."""
    X = a.tracked if X is None else X
    c = field.padded(a.n_max)
    blocks = a.apply(X)
    pi = np.einsum("mn,mnij->ij", np.conj(c), blocks)
    return complex(np.trace(np.asarray(rho0) @ pi))


def _expect_superop(Q, field, rho0, n_max):
    d = int(round(math.sqrt(Q.shape[-1])))
    return adjoint_expectation(AdjointHierarchy(0.0, n_max, Q), field, rho0, np.eye(d))


def recomputed_jump_probability(a: AdjointHierarchy, sys, xi, field, dt, rho0) -> float:
    """Pr(J) from the adjoint blocks alone."""
    return dt * _expect_superop(adjoint_jump(a.superops, sys, xi), field, rho0, a.n_max).real


def recomputed_current(a: AdjointHierarchy, sys, xi, phase, field, rho0) -> float:
    """K_phi from the adjoint blocks: e^{-i phi} sqrt(n) xi pi_{m,n-1}[S] + h.c. terms."""
    return _expect_superop(adjoint_conditioning(a.superops, sys, xi, phase), field, rho0,
                           a.n_max).real


# ---- steps -------------------------------------------------------------------------
def adjoint_step_counting(a: AdjointHierarchy, sys, xi_t, field, dt, outcome: int,
                          probability: Optional[float] = None, efficiency: float = 1.0,
                          baths=(), rho0=None) -> AdjointHierarchy:
    """Adjoint of the first-order counting update.

    ``probability`` is the normalization the paired Schrödinger step used
    (eta Pr(J) after a count, 1 - eta Pr(J) otherwise).  If it is omitted
    it is recomputed from the adjoint blocks, which needs ``rho0``.
    """
    P = a.superops
    if outcome not in (0, 1):
        raise RecordError("counting outcome must be 0 or 1")
    J = adjoint_jump(P, sys, xi_t)
    if probability is None:
        if rho0 is None:
            raise ValidationError("rho0 is required to recompute probabilities")
        pr = dt * _expect_superop(J, field, rho0, a.n_max).real
        probability = efficiency * pr if outcome else 1 - efficiency * pr
    if outcome:
        new = efficiency * dt * J
    else:
        new = P + dt * adjoint_generator(P, sys, xi_t, baths) - efficiency * dt * J
    return a._with(a.time + dt, new / probability)


def adjoint_step_homodyne(a: AdjointHierarchy, sys, xi_t, field, dt, phase, innovation,
                          current: Optional[float] = None, normalization: float = 1.0,
                          efficiency: float = 1.0, baths=(), rho0=None) -> AdjointHierarchy:
    """Adjoint of the Gaussian homodyne update with the paired run's innovation."""
    P = a.superops
    C = adjoint_conditioning(P, sys, xi_t, phase)
    if current is None:
        if rho0 is None:
            raise ValidationError("rho0 is required to recompute the current")
        current = _expect_superop(C, field, rho0, a.n_max).real
    new = P + dt * adjoint_generator(P, sys, xi_t, baths)
    new = new + math.sqrt(efficiency) * innovation * (C - current * P)
    return a._with(a.time + dt, new / normalization)


def adjoint_step_heterodyne(a: AdjointHierarchy, sys, xi_t, field, dt, innovations,
                            currents=None, normalization: float = 1.0,
                            efficiency: float = 1.0, baths=(), rho0=None) -> AdjointHierarchy:
    """Two homodyne conditioning terms (phases 0 and pi/2) with sqrt(eta/2) weights."""
    P = a.superops
    new = P + dt * adjoint_generator(P, sys, xi_t, baths)
    for k, phase in enumerate((0.0, math.pi / 2)):
        C = adjoint_conditioning(P, sys, xi_t, phase)
        K = None if currents is None else currents[k]
        if K is None:
            K = _expect_superop(C, field, rho0, a.n_max).real
        new = new + math.sqrt(efficiency / 2) * innovations[k] * (C - K * P)
    return a._with(a.time + dt, new / normalization)


def adjoint_step_binary(a: AdjointHierarchy, sys, xi_t, field, dt, phase, sign: int,
                        probability: float, efficiency: float = 1.0, baths=()):
    """Adjoint of the two-outcome homodyne update."""
    P = a.superops
    C = adjoint_conditioning(P, sys, xi_t, phase)
    new = P + dt * adjoint_generator(P, sys, xi_t, baths) + sign * math.sqrt(efficiency * dt) * C
    return a._with(a.time + dt, 0.5 * new / probability)


# ---- paired runs -------------------------------------------------------------------
@dataclass
class PairedRun:
    times: np.ndarray
    schrodinger: list          # HierarchyState snapshots
    adjoint: List[AdjointHierarchy]
    outcomes: List[StepOutcome]


def paired_run(scenario: Scenario, seed: int = 0, recompute: bool = False) -> PairedRun:
    """Run the first-order Schrödinger hierarchy and its adjoint on one record.

    With ``recompute=True`` the adjoint side derives Pr(J) and K_phi from its
    own blocks instead of taking them from the Schrödinger run.
    """
    det = scenario.detection
    if det.method != "euler":
        scenario = scenario.with_(detection=Detection(det.scheme, det.phase, det.efficiency,
                                                      det.outcomes, "euler"))
        det = scenario.detection
    res = run_trajectory(scenario, seed=seed, check=False)
    eng = Engine(scenario, check=False)
    rho0 = scenario.initial_state
    sys, field, dt = scenario.system, scenario.field, eng.dt
    a = init_adjoint(None, scenario.n_max, dim=sys.dim, time=eng.times[0])
    adj = [a]
    for k, oc in enumerate(res.outcomes):
        xi = eng.xi_mid[k]
        if det.scheme == "counting":
            p = None if recompute else oc.probability
            a = adjoint_step_counting(a, sys, xi, field, dt, int(oc.value), p, det.efficiency,
                                      scenario.baths, rho0)
        elif det.outcomes == "binary" and det.scheme == "homodyne":
            a = adjoint_step_binary(a, sys, xi, field, dt, det.phase, 1 if oc.value > 0 else -1,
                                    oc.probability, det.efficiency, scenario.baths)
        elif det.scheme == "homodyne":
            K = None if recompute else oc.mean
            a = adjoint_step_homodyne(a, sys, xi, field, dt, det.phase, float(oc.innovation), K,
                                      oc.probability, det.efficiency, scenario.baths, rho0)
        elif det.scheme == "heterodyne" and det.outcomes == "gaussian":
            K = None if recompute else oc.mean
            a = adjoint_step_heterodyne(a, sys, xi, field, dt, np.asarray(oc.innovation), K,
                                        oc.probability, det.efficiency, scenario.baths, rho0)
        else:
            raise ValidationError("paired runs support counting, homodyne and Gaussian heterodyne")
        adj.append(a)
    return PairedRun(res.times, res.snapshots, adj, res.outcomes)


def duality_error(run: PairedRun, rho0, operators: Sequence[np.ndarray]) -> float:
    """max over steps, blocks and X of |Tr[rho0 pi_mn[X]] - Tr[X rho_nm]|."""
    worst = 0.0
    rho0 = np.asarray(rho0)
    for h, a in zip(run.schrodinger, run.adjoint):
        F = h.full()
        for X in operators:
            lhs = np.einsum("ij,mnji->mn", rho0, a.apply(X))
            rhs = np.einsum("ij,nmji->mn", X, F)
            worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return worst
