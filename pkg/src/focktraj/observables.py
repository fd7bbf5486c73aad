"""Conditional expectation values, purity and conditional field statistics.

Bloch components assume a qubit in the ``(|g>, |e>)`` basis and are refused
for any other dimension.
"""

from __future__ import annotations

from typing import Dict, Mapping, Optional, Sequence

import numpy as np

from .errors import ValidationError
from . import generators as gen
from .hierarchy import HierarchyState, reduce_block_matrix, reduced_state
from .system_model import (PROJ_E, SIGMA_X, SIGMA_Y, SIGMA_Z, FieldState,
                           SystemOperators)

BUILTINS = ("bloch_x", "bloch_y", "bloch_z", "excited_population", "purity", "trace",
            "photon_flux", "quadrature_current", "cumulative_counts")

_QUBIT_OPS = {"bloch_x": SIGMA_X, "bloch_y": SIGMA_Y, "bloch_z": SIGMA_Z,
              "excited_population": PROJ_E}


def check_hermitian(X, tol=1e-10) -> np.ndarray:
    X = np.asarray(X, complex)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise ValidationError("observable must be a square matrix")
    if np.max(np.abs(X - X.conj().T)) > tol:
        raise ValidationError("observable is not Hermitian")
    return X


def expectation(h: HierarchyState, field: FieldState, X) -> float:
    """Tr[rho_sys X] for Hermitian X."""
    X = check_hermitian(X)
    if X.shape[0] != h.dim:
        raise ValidationError("observable dimension does not match the system")
    return gen.real_checked(np.trace(reduced_state(h, field) @ X), "expectation")


def purity(h: HierarchyState, field: FieldState) -> float:
    rho = reduced_state(h, field)
    return float(np.real(np.trace(rho @ rho)))


def bloch_vector(h: HierarchyState, field: FieldState) -> np.ndarray:
    if h.dim != 2:
        raise ValidationError("Bloch components are only defined for a two-level system")
    return np.array([expectation(h, field, _QUBIT_OPS[k]) for k in ("bloch_x", "bloch_y", "bloch_z")])


def conditional_photon_flux(h: HierarchyState, sys: SystemOperators, xi_t: complex,
                            field: FieldState) -> float:
    """Expected output photon flux given the record so far (a rate).

    Same trace as ``jump_probability / dt``, taken without the [0, 1] clamp
    since a rate may exceed one.
    """
    J = gen.jump_update(h, sys, xi_t).full_blocks
    c = field.padded(h.n_max)
    return float(np.einsum("mn,mnii->", c, J).real)


def conditional_quadrature(h: HierarchyState, sys: SystemOperators, xi_t: complex,
                           field: FieldState, phase: float) -> float:
    return gen.expected_current(h, sys, xi_t, phase, field)


class SeriesEvaluator:
    """Evaluates named observables on batches of block matrices.

    Used by the integrator to build time series without keeping snapshots.
    """

    def __init__(self, names: Sequence[str], ops: gen.LadderOperators, phase: float = 0.0,
                 matrices: Optional[Mapping[str, np.ndarray]] = None):
        matrices = dict(matrices or {})
        self.ops = ops
        self.phase = phase
        self.names = []
        for n in list(names) + ["trace", "purity", "cumulative_counts"]:
            if n not in self.names:
                self.names.append(n)
        self.matrices = {}
        for n in self.names:
            if n in matrices:
                X = check_hermitian(matrices[n])
                if X.shape[0] != ops.dim:
                    raise ValidationError(f"observable {n!r} has the wrong dimension")
                self.matrices[n] = X
            elif n in _QUBIT_OPS:
                if ops.dim != 2:
                    raise ValidationError(f"{n} needs a two-level system")
                self.matrices[n] = _QUBIT_OPS[n]
            elif n not in BUILTINS:
                raise ValidationError(f"unknown observable {n!r}")

    def __call__(self, R: np.ndarray, xi: complex, counts: np.ndarray) -> Dict[str, np.ndarray]:
        ops = self.ops
        rho = reduce_block_matrix(R, ops.coeffs, ops.dim)
        out = {}
        for n in self.names:
            if n in self.matrices:
                out[n] = np.einsum("bij,ji->b", rho, self.matrices[n]).real
            elif n == "purity":
                out[n] = np.einsum("bij,bji->b", rho, rho).real
            elif n == "trace":
                out[n] = np.einsum("bii->b", rho).real
            elif n == "photon_flux":
                out[n] = ops.wtrace(ops.apply_jump(R, xi))
            elif n == "quadrature_current":
                out[n] = ops.apply_conditioning(R, xi, self.phase)[1]
            elif n == "cumulative_counts":
                out[n] = np.asarray(counts, float)
        return out

