"""One time bin of the field: the entangling unitary and detector instruments.

A bin of width dt holds at most one photon (basis |0>, |1>).  The
system-bin unitary is the first-order propagator with

    dB -> sqrt(dt) |0><1|,   dB^dag -> sqrt(dt) |1><0|,   dLambda -> |1><1|,

made exactly unitary by a polar decomposition.  Index ordering on the
combined space is ``system (x) bin``, i.e. ``s * 2 + b``.

A detector outcome is described by a list of *rows*: each row ``r`` is a
bra on the bin, ``<r| = r_0 <0| + r_1 <1|``.  Several rows for one outcome
stand for branches that are summed incoherently (e.g. a photon lost before
the detector).  Summed over outcomes, ``sum_r |r><r|`` is the identity on
the bin, so the instrument is trace preserving.
"""

from __future__ import annotations

import math
from typing import Dict, List, Tuple

import numpy as np
from scipy import linalg

from .errors import ResolutionError
from .system_model import SystemOperators

Row = Tuple[complex, complex]


def first_order_bin_propagator(sys: SystemOperators, dt: float) -> np.ndarray:
    S, L, H = sys.scattering, sys.coupling, sys.hamiltonian
    d = sys.dim
    Id = np.eye(d)
    lower = np.array([[0, 1], [0, 0]], complex)   # |0><1|
    number = np.array([[0, 0], [0, 1]], complex)  # |1><1|
    G = 1j * H + 0.5 * L.conj().T @ L
    U = np.kron(Id, np.eye(2)) - dt * np.kron(G, np.eye(2))
    U = U - math.sqrt(dt) * np.kron(L.conj().T @ S, lower)
    U = U + math.sqrt(dt) * np.kron(L, lower.T)
    U = U + np.kron(S - Id, number)
    return U


def bin_unitary(sys: SystemOperators, dt: float) -> np.ndarray:
    """Exactly unitary (2d x 2d) propagator for one bin of width ``dt``."""
    if dt <= 0:
        raise ResolutionError("bin width must be positive")
    if dt * sys.decay_norm > 0.01:
        raise ResolutionError(f"bin width {dt:g} too coarse: dt*||L^dag L|| > 0.01")
    A = first_order_bin_propagator(sys, dt)
    sv = np.linalg.svd(A, compute_uv=False)
    if sv.min() < 1e-8:
        raise ResolutionError("first-order bin propagator is singular; cannot unitarize")
    U, _ = linalg.polar(A)
    return U


def bin_blocks(U: np.ndarray, dim: int) -> np.ndarray:
    """Split U into system operators ``out[j, a] = <j|U|a>`` (bin indices)."""
    return np.transpose(U.reshape(dim, 2, dim, 2), (1, 3, 0, 2))


def counting_instrument(efficiency: float) -> Dict[int, List[Row]]:
    eta = float(efficiency)
    return {1: [(0, math.sqrt(eta))],
            0: [(1, 0), (0, math.sqrt(1 - eta))]}


def homodyne_instrument(phase: float, efficiency: float) -> Dict[int, List[Row]]:
    """Outcomes +1/-1 of the binary quadrature measurement."""
    eta = float(efficiency)
    e = np.exp(-1j * phase) * math.sqrt(eta)
    h = 1 / math.sqrt(2)
    lost = (0, h * math.sqrt(1 - eta))
    return {s: [(h, s * h * e), lost] for s in (1, -1)}


def heterodyne_instrument(efficiency: float) -> Dict[Tuple[int, int], List[Row]]:
    """Four joint outcomes (s, r) for the quadratures at phases 0 and pi/2."""
    eta = float(efficiency)
    lost = (0, 0.5 * math.sqrt(1 - eta))
    out = {}
    for s in (1, -1):
        for r in (1, -1):
            out[(s, r)] = [(0.5, 0.5 * (s - 1j * r) / math.sqrt(2) * math.sqrt(eta)), lost]
    return out


def is_complete(instrument) -> bool:
    """Check sum over outcomes and rows of |r><r| equals the bin identity."""
    tot = np.zeros((2, 2), complex)
    for rows in instrument.values():
        for r in rows:
            v = np.asarray(r, complex)
            tot += np.outer(v.conj(), v)
    return bool(np.allclose(tot, np.eye(2), atol=1e-14))
