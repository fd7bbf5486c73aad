"""Physical scenario: system operators, temporal wave packet and input field.

Conventions fixed here and used everywhere else:

* photon numbers index from 0, so a coefficient matrix for at most ``N``
  photons is ``(N+1) x (N+1)``;
* the two-level atom uses the basis ordering ``(|g>, |e>)``, so
  ``sigma_minus = |g><e| = [[0, 1], [0, 0]]`` and
  ``sigma_z = |e><e| - |g><g| = diag(-1, 1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, special

from .errors import ValidationError

# total packet mass allowed outside the truncated support
SUPPORT_TAIL = 1e-12

SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)
SIGMA_PLUS = SIGMA_MINUS.conj().T
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, 1j], [-1j, 0]], dtype=complex)  # -i(|e><g| - |g><e|)
SIGMA_Z = np.array([[-1, 0], [0, 1]], dtype=complex)
PROJ_E = np.array([[0, 0], [0, 1]], dtype=complex)
PROJ_G = np.array([[1, 0], [0, 0]], dtype=complex)


def _as_matrix(a, name: str, dim: Optional[int] = None) -> np.ndarray:
    m = np.array(a, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValidationError(f"{name} must be a square matrix, got shape {m.shape}")
    if dim is not None and m.shape[0] != dim:
        raise ValidationError(f"{name} must be {dim}x{dim}, got {m.shape}")
    m.setflags(write=False)
    return m


def check_density_matrix(rho, name="density matrix", tol=1e-10) -> np.ndarray:
    """Return ``rho`` as a complex array after checking it is a valid state."""
    rho = np.array(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValidationError(f"{name} must be square, got shape {rho.shape}")
    if np.max(np.abs(rho - rho.conj().T), initial=0.0) > tol:
        raise ValidationError(f"{name} is not Hermitian")
    if abs(np.trace(rho) - 1) > tol:
        raise ValidationError(f"{name} has trace {np.trace(rho).real:.3g}, expected 1")
    if np.linalg.eigvalsh(rho).min() < -tol:
        raise ValidationError(f"{name} is not positive semidefinite")
    return rho


@dataclass(frozen=True)
class SystemOperators:
    """The (S, L, H) triple coupling a d-level system to one field channel.

    ``coupling`` has units of sqrt(rate), ``hamiltonian`` of rate (hbar = 1).
    """

    scattering: np.ndarray
    coupling: np.ndarray
    hamiltonian: np.ndarray

    def __post_init__(self):
        S = _as_matrix(self.scattering, "scattering")
        d = S.shape[0]
        L = _as_matrix(self.coupling, "coupling", d)
        H = _as_matrix(self.hamiltonian, "hamiltonian", d)
        if np.max(np.abs(S.conj().T @ S - np.eye(d))) > 1e-12:
            raise ValidationError("scattering operator is not unitary")
        if np.max(np.abs(H - H.conj().T)) > 1e-12:
            raise ValidationError("hamiltonian is not Hermitian")
        object.__setattr__(self, "scattering", S)
        object.__setattr__(self, "coupling", L)
        object.__setattr__(self, "hamiltonian", H)

    @property
    def dim(self) -> int:
        return self.scattering.shape[0]

    @property
    def decay_norm(self) -> float:
        """Spectral norm of L^dag L, the fastest emission rate."""
        L = self.coupling
        return float(np.linalg.norm(L.conj().T @ L, 2))


@dataclass(frozen=True)
class BathChannel:
    """Unmonitored thermal channel with jump operator L~ and occupation <n>."""

    coupling: np.ndarray
    mean_occupation: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "coupling", _as_matrix(self.coupling, "bath coupling"))
        if not self.mean_occupation >= 0:
            raise ValidationError("bath mean_occupation must be >= 0")
        object.__setattr__(self, "mean_occupation", float(self.mean_occupation))


@dataclass(frozen=True)
class GaussianEnvelope:
    """Gaussian amplitude whose intensity has standard deviation 1/ratio.

    Kept as a small picklable object (rather than a closure) so packets can
    be shipped to worker processes.
    """

    ratio: float
    center: float = 0.0
    scale: float = 1.0

    def __call__(self, t):
        r = self.ratio
        amp = (r * r / (2 * np.pi)) ** 0.25
        return self.scale * amp * np.exp(-(r * r) * (np.asarray(t, float) - self.center) ** 2 / 4)

    def upper_mass(self, t):
        """Closed form of the integral of |xi|^2 from t to infinity."""
        z = self.ratio * (np.asarray(t, float) - self.center) / math.sqrt(2)
        return self.scale ** 2 * 0.5 * special.erfc(z)


@dataclass(frozen=True)
class WavePacket:
    """Square-normalized temporal envelope xi(t) on a closed support.

    Parameters
    ----------
    envelope : callable
        Maps an array of times to complex amplitudes (units 1/sqrt(time)).
    support : (t_lo, t_hi)
        Outside this interval the envelope is treated as exactly zero.
    """

    envelope: Callable
    support: tuple
    upper_mass: Optional[Callable] = field(default=None, repr=False)

    def __post_init__(self):
        lo, hi = (float(x) for x in self.support)
        if not hi > lo:
            raise ValidationError("packet support must satisfy t_lo < t_hi")
        object.__setattr__(self, "support", (lo, hi))
        norm = self.norm()
        if abs(norm - 1) > 1e-8:
            raise ValidationError(f"packet is not square-normalized (integral {norm:.10f})")

    def __call__(self, t):
        t = np.asarray(t, float)
        lo, hi = self.support
        vals = np.asarray(self.envelope(t), dtype=complex)
        return np.where((t >= lo) & (t <= hi), vals, 0.0)

    sample = __call__

    def norm(self) -> float:
        lo, hi = self.support
        val, _ = integrate.quad(lambda s: abs(self.envelope(s)) ** 2, lo, hi,
                                limit=400, epsabs=1e-13, epsrel=1e-12)
        return val

    def max_intensity(self, n=4001) -> float:
        lo, hi = self.support
        ts = np.linspace(lo, hi, n)
        return float(np.max(np.abs(self(ts)) ** 2))


def make_gaussian_wavepacket(bandwidth_ratio: float, center: float = 0.0) -> WavePacket:
    """Gaussian packet with intensity variance ``bandwidth_ratio**-2``.

    The support is cut where the two tails together hold less than
    ``SUPPORT_TAIL`` of the mass and the amplitude is rescaled so the
    truncated packet is exactly normalized.
    """
    if not bandwidth_ratio > 0:
        raise ValidationError("bandwidth_ratio must be positive")
    r = float(bandwidth_ratio)
    half = math.sqrt(2) * special.erfcinv(SUPPORT_TAIL) / r
    mass = 1 - special.erfc(r * half / math.sqrt(2))
    env = GaussianEnvelope(r, float(center), 1 / math.sqrt(mass))
    lo, hi = center - half, center + half
    hi_tail = float(env.upper_mass(hi))
    return WavePacket(env, (lo, hi), upper_mass=_GaussianTail(env, lo, hi, hi_tail))


@dataclass(frozen=True)
class _GaussianTail:
    env: GaussianEnvelope
    lo: float
    hi: float
    hi_tail: float

    def __call__(self, t):
        t = np.clip(np.asarray(t, float), self.lo, self.hi)
        return self.env.upper_mass(t) - self.hi_tail


def residual_fraction(packet: WavePacket, t) -> float:
    """w(t): fraction of the packet still to arrive after time ``t``."""
    lo, hi = packet.support
    if t <= lo:
        return 1.0
    if t >= hi:
        return 0.0
    if packet.upper_mass is not None:
        return float(np.clip(packet.upper_mass(t), 0.0, 1.0))
    val, _ = integrate.quad(lambda s: abs(packet.envelope(s)) ** 2, t, hi,
                            limit=400, epsabs=1e-13, epsrel=1e-12)
    return float(np.clip(val, 0.0, 1.0))


@dataclass(frozen=True)
class FieldState:
    """Density matrix of the packet mode in the Fock basis, photons 0..N."""

    max_photons: int
    coeffs: np.ndarray

    def __post_init__(self):
        n = int(self.max_photons)
        if n < 0:
            raise ValidationError("max_photons must be non-negative")
        c = np.array(self.coeffs, dtype=complex)
        if c.shape != (n + 1, n + 1):
            raise ValidationError(f"coeffs must be {(n + 1, n + 1)}, got {c.shape}")
        check_density_matrix(c, "field coefficients")
        c.setflags(write=False)
        object.__setattr__(self, "max_photons", n)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def fock(cls, n: int) -> "FieldState":
        c = np.zeros((n + 1, n + 1), complex)
        c[n, n] = 1
        return cls(n, c)

    @classmethod
    def from_amplitudes(cls, amps: Sequence[complex]) -> "FieldState":
        """Pure superposition sum_n a_n |n>, renormalized."""
        a = np.asarray(amps, complex)
        nrm = np.linalg.norm(a)
        if nrm == 0:
            raise ValidationError("amplitudes are all zero")
        a = a / nrm
        return cls(len(a) - 1, np.outer(a, a.conj()))

    def padded(self, n_max: int) -> np.ndarray:
        """Coefficient matrix zero-padded to ``n_max`` photons."""
        if n_max < self.max_photons:
            raise ValidationError("cannot pad field to fewer photons")
        c = np.zeros((n_max + 1, n_max + 1), complex)
        k = self.max_photons + 1
        c[:k, :k] = self.coeffs
        return c

    @property
    def mean_photons(self) -> float:
        return float(np.arange(self.max_photons + 1) @ np.diag(self.coeffs).real)

    @property
    def is_fock(self) -> bool:
        c = np.zeros_like(self.coeffs)
        c[-1, -1] = 1
        return bool(np.array_equal(self.coeffs, c))


def _coherent_amplitudes(peak_amplitude: complex, truncation: int) -> np.ndarray:
    alpha = complex(peak_amplitude)
    n = np.arange(truncation + 1)
    logfact = special.gammaln(n + 1)
    mag = np.exp(-abs(alpha) ** 2 / 2 - logfact / 2)
    if alpha == 0:
        pw = (n == 0).astype(complex)
    else:
        pw = np.exp(n * np.log(alpha))
    return mag * pw


def coherent_coefficients(peak_amplitude: complex, truncation: int) -> FieldState:
    """Coherent state |alpha> truncated at ``truncation`` photons and renormalized."""
    if truncation < 0:
        raise ValidationError("truncation must be non-negative")
    return FieldState.from_amplitudes(_coherent_amplitudes(peak_amplitude, truncation))


def captured_photon_fraction(peak_amplitude: complex, truncation: int) -> float:
    """Share of the coherent state's mean photon number kept by a truncation.

    Sums n |a_n|^2 over the retained Fock components without renormalizing,
    then divides by |alpha|^2. Equal to the Poisson CDF at ``truncation - 1``.
    """
    if truncation < 0:
        raise ValidationError("truncation must be non-negative")
    mean = abs(complex(peak_amplitude)) ** 2
    if mean == 0:
        return 1.0
    a = _coherent_amplitudes(peak_amplitude, truncation)
    return float(np.arange(truncation + 1) @ np.abs(a) ** 2 / mean)


def two_level_atom(decay_rate: float, detuning: float = 0.0) -> SystemOperators:
    """S = I, L = sqrt(decay_rate) sigma_minus, H = -detuning sigma_z."""
    if not decay_rate > 0:
        raise ValidationError("decay_rate must be positive")
    return SystemOperators(np.eye(2, dtype=complex),
                           math.sqrt(decay_rate) * SIGMA_MINUS,
                           -float(detuning) * SIGMA_Z)
