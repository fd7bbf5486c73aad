"""Superoperators, probabilities and currents of the Fock-state SMEs.

Two implementations live here on purpose:

* block-by-block functions (``unconditional_generator``, ``jump_update``, ...)
  that transcribe the per-(m, n) formulas term by term on
  :class:`HierarchyState` values; they are the readable reference;
* :class:`LadderOperators`, which writes the same maps on the block matrix
  ``R = sum |m><n| (x) rho_{m,n}`` using the ladder operator ``a^dag`` on the
  photon index.  With ``J = I(x)L + xi a^dag(x)S`` the jump map is simply
  ``J R J^dag`` and the unsubtracted conditioning map is
  ``e^{-i phi} J R + e^{i phi} R J^dag``.  The integrator uses this form
  because it batches over trajectories with plain matrix products.

The tests check that both agree.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import NumericalError
from .hierarchy import HierarchyState, full_to_block_matrix, weighted_trace
from .system_model import BathChannel, FieldState, SystemOperators

PROB_TOL = 1e-12
IMAG_TOL = 1e-8


@dataclass(frozen=True)
class HierarchyDerivative:
    """Same block layout as a hierarchy; holds a rate or an update."""

    full_blocks: np.ndarray

    def block(self, m, n):
        if m < 0 or n < 0:
            d = self.full_blocks.shape[-1]
            return np.zeros((d, d), complex)
        return self.full_blocks[m, n]

    def as_state(self, time: float) -> HierarchyState:
        return HierarchyState.from_full(time, self.full_blocks)


def dag(A):
    return np.conj(np.swapaxes(A, -1, -2))


def lindblad(L: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """D_L[rho] = L rho L^dag - (L^dag L rho + rho L^dag L) / 2."""
    LdL = dag(L) @ L
    return L @ rho @ dag(L) - 0.5 * (LdL @ rho + rho @ LdL)


# shifted views with the sqrt(m), sqrt(n) ladder factors folded in;
# negative indices read as zero blocks
def _lower_m(F):
    out = np.zeros_like(F)
    m = np.sqrt(np.arange(F.shape[0]))
    out[1:] = F[:-1] * m[1:, None, None, None]
    return out


def _lower_n(F):
    out = np.zeros_like(F)
    n = np.sqrt(np.arange(F.shape[1]))
    out[:, 1:] = F[:, :-1] * n[None, 1:, None, None]
    return out


def _lower_mn(F):
    return _lower_n(_lower_m(F))


def _ops(sys: SystemOperators):
    S, L, H = sys.scattering, sys.coupling, sys.hamiltonian
    return S, L, H, dag(S), dag(L)


def unconditional_generator(h: HierarchyState, sys: SystemOperators, xi_t: complex,
                            baths: Sequence[BathChannel] = ()) -> HierarchyDerivative:
    """K_{m,n}: the drift of every block, including unmonitored thermal baths."""
    S, L, H, Sd, Ld = _ops(sys)
    xi = complex(xi_t)
    F = h.full()
    Fm, Fn, Fmn = _lower_m(F), _lower_n(F), _lower_mn(F)
    out = -1j * (H @ F - F @ H) + lindblad(L, F)
    out = out + xi * ((S @ Fm) @ Ld - Ld @ (S @ Fm))
    out = out + np.conj(xi) * (L @ (Fn @ Sd) - (Fn @ Sd) @ L)
    out = out + abs(xi) ** 2 * (S @ Fmn @ Sd - Fmn)
    for bath in baths:
        Lt, n_th = bath.coupling, bath.mean_occupation
        out = out + (n_th + 1) * lindblad(Lt, F) + n_th * lindblad(dag(Lt), F)
    return HierarchyDerivative(out)


def jump_update(h: HierarchyState, sys: SystemOperators, xi_t: complex) -> HierarchyDerivative:
    """Unnormalized post-count blocks."""
    S, L, H, Sd, Ld = _ops(sys)
    xi = complex(xi_t)
    F = h.full()
    out = L @ F @ Ld
    out = out + xi * S @ _lower_m(F) @ Ld
    out = out + np.conj(xi) * L @ _lower_n(F) @ Sd
    out = out + abs(xi) ** 2 * S @ _lower_mn(F) @ Sd
    return HierarchyDerivative(out)


def no_jump_update(h: HierarchyState, sys: SystemOperators, xi_t: complex,
                   dt: float) -> HierarchyDerivative:
    """Unnormalized no-count blocks; the caller divides by Pr(no count)."""
    S, L, H, Sd, Ld = _ops(sys)
    xi = complex(xi_t)
    F = h.full()
    LdL = Ld @ L
    rate = -1j * (H @ F - F @ H) - 0.5 * (LdL @ F + F @ LdL)
    rate = rate - xi * Ld @ S @ _lower_m(F)
    rate = rate - np.conj(xi) * _lower_n(F) @ Sd @ L
    rate = rate - abs(xi) ** 2 * _lower_mn(F)
    return HierarchyDerivative(F + dt * rate)


def _weighted_trace_full(full, field: FieldState):
    c = field.padded(full.shape[0] - 1)
    return np.einsum("mn,mnii->", c, full)


def jump_probability(h: HierarchyState, sys: SystemOperators, xi_t: complex,
                     field: FieldState, dt: float) -> float:
    """Pr(J) for one step of length ``dt``, written from the trace formula."""
    S, L, H, Sd, Ld = _ops(sys)
    xi = complex(xi_t)
    F = h.full()
    inner = Ld @ L @ F
    inner = inner + xi * Ld @ S @ _lower_m(F)
    inner = inner + np.conj(xi) * Sd @ L @ _lower_n(F)
    inner = inner + abs(xi) ** 2 * _lower_mn(F)
    p = dt * _weighted_trace_full(inner, field).real
    return clamp_probability(float(p))


def clamp_probability(p: float) -> float:
    if p < -PROB_TOL or p > 1 + PROB_TOL:
        raise NumericalError(f"probability {p:.3e} outside [0, 1]; reduce the step size")
    return min(max(p, 0.0), 1.0)


def _homodyne_unsubtracted(F, sys, xi_t, phase):
    S, L, H, Sd, Ld = _ops(sys)
    xi = complex(xi_t)
    em, ep = np.exp(-1j * phase), np.exp(1j * phase)
    out = em * L @ F + ep * F @ Ld
    out = out + em * xi * S @ _lower_m(F)
    out = out + ep * np.conj(xi) * _lower_n(F) @ Sd
    return out


def expected_current(h: HierarchyState, sys: SystemOperators, xi_t: complex, phase: float,
                     field: FieldState) -> float:
    """K_phi, the conditional mean of the quadrature current."""
    S, L, H, Sd, Ld = _ops(sys)
    xi = complex(xi_t)
    F = h.full()
    em, ep = np.exp(-1j * phase), np.exp(1j * phase)
    inner = (em * L + ep * Ld) @ F
    inner = inner + em * xi * S @ _lower_m(F)
    inner = inner + ep * np.conj(xi) * Sd @ _lower_n(F)
    return real_checked(_weighted_trace_full(inner, field), "K_phi")


def real_checked(z, what="value") -> float:
    z = complex(z)
    if abs(z.imag) > IMAG_TOL:
        raise NumericalError(f"{what} has imaginary part {z.imag:.3e}")
    return z.real


def homodyne_map(h: HierarchyState, sys: SystemOperators, xi_t: complex, phase: float,
                 field: FieldState, subtract: bool = True) -> HierarchyDerivative:
    """H_{m,n}[phi]; ``subtract=False`` omits the -K_phi rho_{m,n} term."""
    F = h.full()
    out = _homodyne_unsubtracted(F, sys, xi_t, phase)
    if subtract:
        out = out - expected_current(h, sys, xi_t, phase, field) * F
    return HierarchyDerivative(out)


class LadderOperators:
    """Block-matrix form of the generators for one (S, L, H), N and field.

    All ``apply_*`` methods accept block matrices with any leading batch
    shape.
    """

    def __init__(self, sys: SystemOperators, n_max: int, field: FieldState,
                 baths: Sequence[BathChannel] = ()):
        d = sys.dim
        M = n_max + 1
        self.sys = sys
        self.dim = d
        self.n_max = n_max
        self.coeffs = field.padded(n_max)
        a = np.diag(np.sqrt(np.arange(1, M)), -1).astype(complex)  # a^dag on photon index
        Id, IM = np.eye(d), np.eye(M)
        S, L, H = sys.scattering, sys.coupling, sys.hamiltonian
        self.raise_ = a
        self.L = np.kron(IM, L)
        self.Ld = dag(self.L)
        self.H = np.kron(IM, H)
        self.SA = np.kron(a, S)               # a^dag (x) S
        self.A = np.kron(a, Id)               # a^dag (x) I
        self.G = np.kron(IM, 1j * H + 0.5 * dag(L) @ L)
        self.baths = [(np.kron(IM, b.coupling), b.mean_occupation) for b in baths]
        # sum_{m,n} c_{m,n} Tr rho_{m,n} = <R, W> with W[(m,i),(n,j)] = c_{m,n} delta_ij
        self._wvec = np.kron(self.coeffs, Id).ravel()

    def jump_op(self, xi):
        return self.L + xi * self.SA

    def wtrace(self, R):
        R = np.asarray(R)
        flat = R.reshape(R.shape[:-2] + (-1,))
        return (flat @ self._wvec).real

    def apply_generator(self, R, xi):
        """K applied to block matrix R."""
        G, SA, A, L, Ld = self.G, self.SA, self.A, self.L, self.Ld
        SAd, Ad = dag(SA), dag(A)
        out = -(G @ R + R @ dag(G)) + L @ R @ Ld
        SR = SA @ R
        out = out + xi * (SR @ Ld - Ld @ SR)
        RS = R @ SAd
        out = out + np.conj(xi) * (L @ RS - RS @ L)
        out = out + abs(xi) ** 2 * (SA @ RS - A @ R @ Ad)
        for Lt, n_th in self.baths:
            out = out + (n_th + 1) * lindblad(Lt, R) + n_th * lindblad(dag(Lt), R)
        return out

    def apply_jump(self, R, xi):
        J = self.jump_op(xi)
        return J @ R @ dag(J)

    def apply_conditioning(self, R, xi, phase):
        """Unsubtracted conditioning map; returns (map, K_phi)."""
        JR = np.exp(-1j * phase) * (self.jump_op(xi) @ R)
        out = JR + dag(JR)
        return out, self.wtrace(out)

    def jump_probability(self, R, xi, dt):
        return dt * self.wtrace(self.apply_jump(R, xi))

    def from_state(self, h: HierarchyState):
        return full_to_block_matrix(h.full())
