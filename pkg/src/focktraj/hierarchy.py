"""Ladder of density-matrix-like blocks rho_{m,n}, 0 <= m, n <= N.

Only the upper triangle (m <= n) is stored; the lower triangle is rebuilt as
adjoints, so the pairing rho_{n,m} = rho_{m,n}^dag holds by construction.

Two equivalent dense views are used by the numerical kernels:

* ``full()``: array of shape ``(N+1, N+1, d, d)`` indexed ``[m, n]``;
* ``block_matrix()``: the ``(N+1)d x (N+1)d`` Hermitian matrix
  ``R = sum_{m,n} |m><n| (x) rho_{m,n}`` with row index ``m*d + i``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .errors import ValidationError
from .system_model import FieldState, check_density_matrix


def triangle_indices(n_max: int) -> Tuple[np.ndarray, np.ndarray]:
    """Row-major (m, n) pairs with m <= n; there are (N+1)(N+2)/2 of them."""
    return np.triu_indices(n_max + 1)


def full_to_block_matrix(full: np.ndarray) -> np.ndarray:
    """(..., M, M, d, d) -> (..., M*d, M*d)."""
    *lead, M, _, d, _ = full.shape
    return np.swapaxes(full, -3, -2).reshape(*lead, M * d, M * d)


def block_matrix_to_full(R: np.ndarray, dim: int) -> np.ndarray:
    """(..., M*d, M*d) -> (..., M, M, d, d)."""
    *lead, Md, _ = R.shape
    M = Md // dim
    return np.swapaxes(R.reshape(*lead, M, dim, M, dim), -3, -2)


def reduce_block_matrix(R: np.ndarray, coeffs: np.ndarray, dim: int) -> np.ndarray:
    """sum_{m,n} c_{m,n} rho_{m,n} for (possibly batched) block matrices."""
    *lead, Md, _ = R.shape
    M = Md // dim
    R4 = R.reshape(*lead, M, dim, M, dim)
    return np.einsum("mn,...minj->...ij", coeffs, R4)


def weighted_trace(R: np.ndarray, coeffs: np.ndarray, dim: int) -> np.ndarray:
    """sum_{m,n} c_{m,n} Tr rho_{m,n}; real part of a quantity that is real."""
    *lead, Md, _ = R.shape
    M = Md // dim
    R4 = R.reshape(*lead, M, dim, M, dim)
    return np.einsum("mn,...mini->...", coeffs, R4).real


@dataclass(frozen=True)
class HierarchyState:
    """Snapshot of the hierarchy at one time.

    Attributes
    ----------
    time : float
    n_max : int
        Highest photon number N carried by the ladder.
    blocks : ndarray, shape ((N+1)(N+2)/2, d, d)
        Upper-triangle blocks in the order of :func:`triangle_indices`.
    """

    time: float
    n_max: int
    blocks: np.ndarray

    def __post_init__(self):
        b = np.array(self.blocks, dtype=complex)
        k = (self.n_max + 1) * (self.n_max + 2) // 2
        if b.ndim != 3 or b.shape[0] != k or b.shape[1] != b.shape[2]:
            raise ValidationError(f"expected {k} square blocks, got shape {b.shape}")
        b.setflags(write=False)
        object.__setattr__(self, "blocks", b)
        object.__setattr__(self, "time", float(self.time))

    @property
    def dim(self) -> int:
        return self.blocks.shape[1]

    def block(self, m: int, n: int) -> np.ndarray:
        """Total accessor: zero matrix for any negative index."""
        d = self.dim
        if m < 0 or n < 0:
            return np.zeros((d, d), complex)
        if m > self.n_max or n > self.n_max:
            raise IndexError(f"block ({m}, {n}) beyond n_max={self.n_max}")
        N = self.n_max
        if m <= n:
            return self.blocks[_tri_pos(m, n, N)]
        return self.blocks[_tri_pos(n, m, N)].conj().T

    def full(self) -> np.ndarray:
        N, d = self.n_max, self.dim
        F = np.zeros((N + 1, N + 1, d, d), complex)
        iu, ju = triangle_indices(N)
        F[iu, ju] = self.blocks
        F[ju, iu] = np.conj(np.swapaxes(self.blocks, -1, -2))
        return F

    def block_matrix(self) -> np.ndarray:
        return full_to_block_matrix(self.full())

    @classmethod
    def from_full(cls, time: float, full: np.ndarray) -> "HierarchyState":
        N = full.shape[0] - 1
        iu, ju = triangle_indices(N)
        return cls(time, N, full[iu, ju])

    @classmethod
    def from_block_matrix(cls, time: float, R: np.ndarray, dim: int) -> "HierarchyState":
        return cls.from_full(time, block_matrix_to_full(R, dim))

    def to_records(self) -> List[Tuple[int, int, List[complex]]]:
        """Flat serialization: (m, n, row-major entries) per stored block."""
        iu, ju = triangle_indices(self.n_max)
        return [(int(m), int(n), list(self.blocks[k].ravel()))
                for k, (m, n) in enumerate(zip(iu, ju))]

    @classmethod
    def from_records(cls, time: float, records, dim: int) -> "HierarchyState":
        N = max(n for _, n, _ in records)
        blocks = np.zeros(((N + 1) * (N + 2) // 2, dim, dim), complex)
        for m, n, vals in records:
            blocks[_tri_pos(m, n, N)] = np.asarray(vals, complex).reshape(dim, dim)
        return cls(time, N, blocks)


def _tri_pos(m: int, n: int, N: int) -> int:
    # position of (m, n), m <= n, in row-major upper-triangle order
    return m * (N + 1) - m * (m - 1) // 2 + (n - m)


def init_hierarchy(initial_system_state, n_max: int, time: float = 0.0) -> HierarchyState:
    """rho_{m,n} = delta_{m,n} rho_0 at the start time."""
    rho0 = check_density_matrix(initial_system_state, "initial system state")
    if n_max < 0:
        raise ValidationError("n_max must be non-negative")
    iu, ju = triangle_indices(n_max)
    blocks = np.where((iu == ju)[:, None, None], rho0[None], 0)
    return HierarchyState(time, n_max, blocks)


def reduced_state(h: HierarchyState, field: FieldState) -> np.ndarray:
    """sum_{m,n} c_{m,n} rho_{m,n}."""
    if field.max_photons > h.n_max:
        raise ValidationError("field carries more photons than the hierarchy")
    c = field.padded(h.n_max)
    return np.einsum("mn,mnij->ij", c, h.full())
