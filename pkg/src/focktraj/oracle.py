"""Brute-force check: explicit joint state of the system and a binned field.

The packet is split into ``B`` bins of width ``dt`` over a window
``[t_start, t_start + B dt)``, each holding at most one photon, plus one
bosonic *remainder* mode carrying the packet mass outside the window
(amplitude ``sqrt(r)``, ``r = 1 - sum |beta_i|^2``).  The remainder never
meets the system, so a window may start in the middle of the packet and
still be compared with a hierarchy started at the window's first time.

The N-photon input is ``(sum_i beta_i b_i^dag + sqrt(r) a^dag)^N / sqrt(N!)``
applied to vacuum with doubly occupied bins dropped; the dropped weight is
reported.  Bins are then processed in order: the bin unitary couples the
system to bin i, the detector rows project it, and the bin is discarded
(or kept as an ancilla when an outcome has several incoherent branches, or
when nothing is measured).

The joint vector has ``d * 2^B * (N+1)`` entries, so ``B`` is capped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
from scipy import special

from . import binmodel
from .binmodel import bin_unitary
from .errors import InfeasibleRecordError, ResolutionError, ValidationError
from .hierarchy import reduced_state
from .integrator import Detection, Scenario, TimeGrid, run_trajectory
from .records import TrajectoryRecord
from .system_model import FieldState, SystemOperators, WavePacket, check_density_matrix

MAX_BINS = 14
DROP_TOL = 1e-3
INFEASIBLE = 1e-14

__all__ = ["BinnedField", "bin_packet", "build_binned_fock", "bin_unitary", "oracle_run",
           "OracleResult", "OracleComparison", "compare_with_hierarchy", "convergence_study",
           "trace_distance", "MAX_BINS"]


@dataclass(frozen=True)
class BinnedField:
    t_start: float
    bin_width: float
    amplitudes: np.ndarray       # beta_i = xi(t_i + dt/2) sqrt(dt)

    @property
    def bin_count(self) -> int:
        return len(self.amplitudes)

    @property
    def remainder(self) -> float:
        return max(0.0, 1.0 - float(np.sum(np.abs(self.amplitudes) ** 2)))

    @property
    def times(self) -> np.ndarray:
        return self.t_start + self.bin_width * np.arange(self.bin_count + 1)


def bin_packet(packet: WavePacket, t_start: float, bins: int, bin_width: float) -> BinnedField:
    mids = t_start + bin_width * (np.arange(bins) + 0.5)
    beta = packet(mids) * math.sqrt(bin_width)
    if np.sum(np.abs(beta) ** 2) > 1 + 1e-9:
        raise ResolutionError("binned packet carries more than unit mass; refine the bins")
    return BinnedField(float(t_start), float(bin_width), beta)


def build_binned_fock(binned: BinnedField, n_photons: int, max_bins: int = MAX_BINS):
    """Field amplitudes of the N-photon state over bins and remainder.

    Returns ``(psi, dropped)`` where ``psi`` has shape ``(2,)*B + (N+1,)``
    (last axis: remainder photon number) and ``dropped`` is the weight lost
    to double occupation before renormalization.
    """
    B, N = binned.bin_count, int(n_photons)
    if B > max_bins:
        raise ResolutionError(f"{B} bins exceed the cap of {max_bins}")
    beta = binned.amplitudes
    if N >= 2 and N * np.max(np.abs(beta) ** 2) > 0.01:
        raise ResolutionError("bins too wide: N max|beta|^2 > 0.01 allows double occupation")
    prod = np.ones(1, complex)
    occ = np.zeros(1, int)
    for b in beta:
        # new trailing axis per bin: index bits run (first bin, ..., last bin)
        prod = np.outer(prod, [1, b]).reshape(-1)
        occ = np.add.outer(occ, [0, 1]).reshape(-1)
    r = binned.remainder
    psi = np.zeros((2 ** B, N + 1), complex)
    for j in range(N + 1):
        sel = occ == j
        coef = math.sqrt(math.exp(special.gammaln(N + 1) - special.gammaln(N - j + 1)))
        psi[sel, N - j] = coef * r ** ((N - j) / 2) * prod[sel]
    norm2 = float(np.sum(np.abs(psi) ** 2))
    dropped = 1.0 - norm2
    if dropped > DROP_TOL:
        raise ResolutionError(f"double-occupation weight {dropped:.2e} exceeds {DROP_TOL}")
    psi /= math.sqrt(norm2)
    return psi.reshape((2,) * B + (N + 1,)), dropped


@dataclass
class OracleResult:
    times: np.ndarray
    states: List[np.ndarray]
    outcomes: list
    probabilities: np.ndarray            # probability of the realized outcome per bin
    outcome_probabilities: List[dict]    # all outcomes per bin
    dropped_weight: float


def _instrument(scheme, efficiency, phase):
    if scheme == "counting":
        return binmodel.counting_instrument(efficiency)
    if scheme == "homodyne":
        return binmodel.homodyne_instrument(phase, efficiency)
    if scheme == "heterodyne":
        return binmodel.heterodyne_instrument(efficiency)
    if scheme == "none":
        return None
    raise ValidationError(f"unknown scheme {scheme!r}")


def oracle_run(system: SystemOperators, rho0, binned: BinnedField, n_photons: int,
               scheme: str = "counting", outcomes: Optional[Sequence] = None,
               rng: Optional[np.random.Generator] = None, efficiency: float = 1.0,
               phase: float = 0.0, max_bins: int = MAX_BINS) -> OracleResult:
    """Conditional reduced states after each bin.

    ``outcomes`` (one per bin) replays a record: 0/1 for counting, +1/-1 for
    homodyne, (s, r) sign pairs for heterodyne.  Without it outcomes are
    sampled from ``rng``.  ``scheme="none"`` keeps every bin unmeasured.
    """
    rho0 = check_density_matrix(rho0, "initial system state")
    d = system.dim
    if rho0.shape[0] != d:
        raise ValidationError("initial state dimension does not match the system")
    field_amp, dropped = build_binned_fock(binned, n_photons, max_bins)
    B = binned.bin_count
    if outcomes is not None and len(outcomes) != B and scheme != "none":
        raise ValidationError(f"record has {len(outcomes)} outcomes for {B} bins")
    if outcomes is None and rng is None and scheme != "none":
        raise ValidationError("either outcomes or rng is required")
    # purify rho0 with an ancilla on the last axis
    lam, vec = np.linalg.eigh(rho0)
    keep = lam > 1e-15
    purif = vec[:, keep] * np.sqrt(lam[keep])                        # (d, r)
    psi = np.einsum("sk,f->sfk", purif, field_amp.ravel()).reshape(d, -1)
    U4 = bin_unitary(system, binned.bin_width).reshape(d, 2, d, 2)
    instrument = _instrument(scheme, efficiency, phase)
    states = [psi @ psi.conj().T]
    probs, allp, realized = [], [], []
    for i in range(B):
        x = psi.reshape(d, 2, -1)
        x = np.einsum("abcd,cdr->abr", U4, x)
        if instrument is None:
            psi = x.transpose(0, 2, 1).reshape(d, -1)
            probs.append(1.0)
            allp.append({})
            realized.append(None)
            states.append(psi @ psi.conj().T)
            continue
        branches = {}
        pk = {}
        for label, rows in instrument.items():
            Rw = np.asarray(rows, complex)                             # (k, 2) bras
            y = np.einsum("kb,abr->akr", Rw, x)
            branches[label] = y
            pk[label] = float(np.sum(np.abs(y) ** 2))
        if outcomes is not None:
            label = outcomes[i]
            label = tuple(int(v) for v in label) if scheme == "heterodyne" else int(label)
        else:
            labels = list(instrument)
            p = np.array([pk[l] for l in labels])
            label = labels[int(rng.choice(len(labels), p=p / p.sum()))]
        if label not in branches:
            raise ValidationError(f"outcome {label!r} not valid for {scheme}")
        p = pk[label]
        if p < INFEASIBLE:
            raise InfeasibleRecordError(f"outcome {label!r} at bin {i} has probability {p:.1e}")
        y = branches[label] / math.sqrt(p)
        if y.shape[1] == 1:
            psi = y[:, 0, :]
        else:
            psi = y.transpose(0, 2, 1).reshape(d, -1)
        probs.append(p)
        allp.append(pk)
        realized.append(label)
        states.append(psi @ psi.conj().T)
    return OracleResult(binned.times, states, realized, np.array(probs), allp, dropped)


def trace_distance(a, b) -> float:
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(a - b))))


# ---- comparison with the hierarchy ---------------------------------------------------
@dataclass
class OracleComparison:
    """Per-bin diagnostics of one record replayed through oracle and hierarchy."""

    scheme: str
    bins: int
    bin_width: float
    times: np.ndarray
    outcomes: list
    trace_distance: np.ndarray       # after each bin (index 0 is the initial state)
    probability_gap: np.ndarray      # |p_oracle - p_hierarchy| per bin
    dropped_weight: float

    @property
    def worst(self) -> float:
        return float(np.max(self.trace_distance))

    def to_text(self) -> str:
        lines = [f"scheme={self.scheme} bins={self.bins} bin_width={self.bin_width:.6g} "
                 f"dropped_weight={self.dropped_weight:.3e}",
                 "bin time outcome trace_distance probability_gap"]
        for i in range(self.bins):
            lines.append(f"{i} {self.times[i + 1]:.6g} {self.outcomes[i]} "
                         f"{self.trace_distance[i + 1]:.3e} {self.probability_gap[i]:.3e}")
        lines.append(f"worst_trace_distance={self.worst:.3e}")
        return "\n".join(lines)


def _record_values(scheme, outcomes, dt):
    if scheme == "counting":
        return np.asarray(outcomes, int), "gaussian"
    return np.asarray(outcomes, float) * math.sqrt(dt), "binary"


def compare_with_hierarchy(system: SystemOperators, packet: WavePacket, n_photons: int, rho0,
                           scheme: str, t_start: float, bins: int, bin_width: float,
                           outcomes: Optional[Sequence] = None, seed: int = 0,
                           method: str = "euler", efficiency: float = 1.0, phase: float = 0.0,
                           max_bins: int = MAX_BINS) -> OracleComparison:
    """Replay one per-bin record through the oracle and the hierarchy.

    Without ``outcomes`` the record is sampled by the oracle itself.  The
    hierarchy runs on the same grid (step = bin width) in binary-outcome mode
    with the given step ``method``.
    """
    binned = bin_packet(packet, t_start, bins, bin_width)
    rng = np.random.default_rng(seed)
    o = oracle_run(system, rho0, binned, n_photons, scheme, outcomes=outcomes, rng=rng,
                   efficiency=efficiency, phase=phase, max_bins=max_bins)
    field = FieldState.fock(n_photons)
    vals, kind = _record_values(scheme, o.outcomes, bin_width)
    det = Detection(scheme, phase, efficiency, kind, method)
    grid = TimeGrid(t_start, t_start + bins * bin_width, bin_width)
    sc = Scenario(system, packet, field, rho0, grid, det, observables=())
    rec = TrajectoryRecord(scheme=scheme, dt=bin_width, t_start=t_start, outcomes=vals,
                           phase=phase, efficiency=efficiency, outcome_kind=kind, seed=seed)
    run = run_trajectory(sc, record=rec, strict=False)
    td = np.array([trace_distance(reduced_state(h, field), x)
                   for h, x in zip(run.snapshots, o.states)])
    gap = np.abs(np.array([s.probability for s in run.outcomes]) - o.probabilities)
    return OracleComparison(scheme, bins, bin_width, o.times, o.outcomes, td, gap,
                            o.dropped_weight)


@dataclass
class ConvergenceStudy:
    coarse: List[OracleComparison]
    fine: List[OracleComparison]

    @property
    def worst_coarse(self) -> float:
        return max(c.worst for c in self.coarse)

    @property
    def worst_fine(self) -> float:
        return max(c.worst for c in self.fine)

    @property
    def ratio(self) -> float:
        return self.worst_coarse / self.worst_fine if self.worst_fine > 0 else math.inf


def convergence_study(system: SystemOperators, packet: WavePacket, n_photons: int, rho0,
                      scheme: str, t_start: float, bins: int, bin_width: float,
                      records: int = 5, seed: int = 0, click_bin: Optional[int] = None,
                      **kw) -> ConvergenceStudy:
    """Worst discrepancy over several records at width dt and at dt/2.

    Each resolution gets its own sampled records (seeds ``seed..seed+records-1``).
    For counting, ``click_bin`` adds one fixed record with a single count in
    that coarse bin (bin ``2*click_bin`` at the fine resolution).
    """
    coarse, fine = [], []
    for r in range(records):
        coarse.append(compare_with_hierarchy(system, packet, n_photons, rho0, scheme, t_start,
                                             bins, bin_width, seed=seed + r, **kw))
        fine.append(compare_with_hierarchy(system, packet, n_photons, rho0, scheme, t_start,
                                           2 * bins, bin_width / 2, seed=seed + r,
                                           max_bins=max(2 * bins, MAX_BINS), **kw))
    if scheme == "counting" and click_bin is not None:
        c = [0] * bins
        c[click_bin] = 1
        f = [0] * (2 * bins)
        f[2 * click_bin] = 1
        coarse.append(compare_with_hierarchy(system, packet, n_photons, rho0, scheme, t_start,
                                             bins, bin_width, outcomes=c, **kw))
        fine.append(compare_with_hierarchy(system, packet, n_photons, rho0, scheme, t_start,
                                           2 * bins, bin_width / 2, outcomes=f,
                                           max_bins=max(2 * bins, MAX_BINS), **kw))
    return ConvergenceStudy(coarse, fine)
