"""Self-checks run by ``focktraj validate``: oracle, duality, invariants, statistics.

Each check returns a :class:`CheckReport`; the CLI prints the text and
exits nonzero when ``passed`` is false.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
from scipy.stats import unitary_group

from .errors import ValidationError
from .heisenberg import duality_error, paired_run
from .integrator import (Detection, Scenario, TimeGrid, run_ensemble, run_trajectory,
                         solve_master_equation)
from .oracle import MAX_BINS, convergence_study
from .system_model import SIGMA_X, SIGMA_Y, SIGMA_Z, FieldState, SystemOperators

DUALITY_TOL = 1e-8
ORACLE_TOL = 0.02
ORACLE_RATIO = (1.5, 3.0)
ME_TOL = 0.05
QUBIT_OPERATORS = (np.eye(2, dtype=complex), SIGMA_X, SIGMA_Y, SIGMA_Z)


@dataclass
class CheckReport:
    name: str
    passed: bool
    lines: List[str] = field(default_factory=list)
    metrics: Dict[str, float] = field(default_factory=dict)

    @property
    def text(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return "\n".join([f"[{status}] {self.name}"] + ["  " + l for l in self.lines])


def random_qubit_system(rng: np.random.Generator, coupling_scale: float = 0.7) -> SystemOperators:
    """Random unitary S, complex Gaussian L and Hermitian H on a qubit."""
    A = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    L = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    S = unitary_group.rvs(2, random_state=rng)
    return SystemOperators(S, coupling_scale * L, (A + A.conj().T) / 2)


def random_pure_state(rng: np.random.Generator, dim: int = 2) -> np.ndarray:
    psi = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    psi /= np.linalg.norm(psi)
    return np.outer(psi, psi.conj())


def _shortened(sc: Scenario, steps: int, t_start: Optional[float] = None) -> Scenario:
    t0 = sc.grid.t_start if t_start is None else t_start
    return sc.with_(grid=TimeGrid(t0, t0 + steps * sc.grid.dt, sc.grid.dt))


def _peak_time(packet) -> float:
    lo, hi = packet.support
    ts = np.linspace(lo, hi, 20001)
    return float(ts[np.argmax(np.abs(packet(ts)))])


def check_duality(sc: Scenario, steps: int = 100, seed: int = 0,
                  recompute: bool = True) -> CheckReport:
    """Paired Schrödinger/adjoint run on the first ``steps`` steps after the packet peak."""
    if sc.detection.scheme == "none":
        raise ValidationError("duality needs a measured scheme")
    t0 = _peak_time(sc.packet) - steps * sc.grid.dt / 2
    short = _shortened(sc, steps, t0)
    ops = QUBIT_OPERATORS if sc.system.dim == 2 else (np.eye(sc.system.dim, dtype=complex),)
    run = paired_run(short, seed=seed, recompute=recompute)
    err = duality_error(run, short.initial_state, ops)
    return CheckReport("duality", err <= DUALITY_TOL,
                       [f"steps={steps} window=[{t0:.6g}, {t0 + steps * sc.grid.dt:.6g}]",
                        f"max |Tr[rho0 pi_mn[X]] - Tr[X rho_nm]| = {err:.3e} (tol {DUALITY_TOL:g})"],
                       {"error": err})


def oracle_window(sc: Scenario, bins: int):
    """Largest bin width the oracle accepts, and a window centred on the packet peak."""
    n = sc.field.max_photons
    rate = max(sc.system.decay_norm, n * sc.packet.max_intensity(), 1e-12)
    width = 0.01 / rate
    return _peak_time(sc.packet) - bins * width / 2, width


def check_oracle(sc: Scenario, bins: int = 8, seed: int = 0, records: int = 5,
                 show_bins: bool = False) -> CheckReport:
    if not sc.field.is_fock:
        raise ValidationError("the oracle needs a Fock-state field")
    scheme = sc.detection.scheme
    if scheme == "none":
        raise ValidationError("the oracle check needs a measured scheme")
    if bins > MAX_BINS:
        raise ValidationError(f"bins must be <= {MAX_BINS} (the fine run uses twice as many)")
    t0, width = oracle_window(sc, bins)
    study = convergence_study(sc.system, sc.packet, sc.field.max_photons, sc.initial_state,
                              scheme, t0, bins, width, records=records, seed=seed,
                              click_bin=bins // 2 if scheme == "counting" else None,
                              efficiency=sc.detection.efficiency, phase=sc.detection.phase)
    lo, hi = ORACLE_RATIO
    ok = study.worst_coarse <= ORACLE_TOL and lo <= study.ratio <= hi
    gap = max(float(np.max(c.probability_gap)) for c in study.coarse)
    kind = " (binary outcomes)" if scheme != "counting" else ""
    lines = [f"scheme={scheme}{kind} bins={bins} "
             f"bin_width={width:.6g} window_start={t0:.6g} records={len(study.coarse)}",
             f"worst trace distance at dt:   {study.worst_coarse:.3e} (tol {ORACLE_TOL})",
             f"worst trace distance at dt/2: {study.worst_fine:.3e}",
             f"convergence ratio: {study.ratio:.3f} (want [{lo}, {hi}])",
             f"worst outcome-probability gap at dt: {gap:.3e}",
             f"dropped double-occupation weight: {max(c.dropped_weight for c in study.coarse):.3e}"]
    if show_bins:
        lines += study.coarse[0].to_text().splitlines()
    return CheckReport("oracle", ok, lines, {"worst": study.worst_coarse, "ratio": study.ratio,
                                             "worst_fine": study.worst_fine})


def check_invariants(sc: Scenario, seed: int = 0) -> CheckReport:
    """One full trajectory with every per-step check on, plus innovation statistics."""
    res = run_trajectory(sc, seed=seed, keep_snapshots=False, check=True)
    d = res.diagnostics
    lines = [f"steps checked: {d['steps']}",
             f"max field-weighted trace deviation: {d['trace_deviation']:.3e}",
             f"max Hermiticity-pairing residual: {d['hermiticity']:.3e}",
             f"min reduced-state eigenvalue: {d['min_eigenvalue']:.3e}"]
    ok = True
    metrics = dict(d)
    det = sc.detection
    if det.scheme in ("homodyne", "heterodyne") and res.outcomes:
        innov = np.array([np.atleast_1d(o.innovation) for o in res.outcomes], float)
        dt = sc.grid.dt
        z = innov.mean(axis=0) / (innov.std(axis=0) / math.sqrt(len(innov)))
        ratio = innov.var(axis=0) / dt
        metrics.update(innovation_z=float(np.max(np.abs(z))), variance_ratio_min=float(ratio.min()),
                       variance_ratio_max=float(ratio.max()))
        lines.append(f"innovation mean z-score: {np.array2string(z, precision=3)}")
        if det.outcomes == "gaussian":
            lines.append(f"innovation variance/dt: {np.array2string(ratio, precision=4)} "
                         f"over {len(innov)} samples")
            ok = ok and bool(np.all((ratio >= 0.95) & (ratio <= 1.05)))
        ok = ok and bool(np.all(np.abs(z) <= 3))
    elif det.scheme == "counting" and res.outcomes:
        innov = np.array([o.innovation for o in res.outcomes], float)
        lines.append(f"counting innovations sum: {innov.sum():.4f} (count minus compensator)")
    return CheckReport("invariants", ok, lines, metrics)


def check_statistics(sc: Scenario, n_traj: int = 1000, base_seed: int = 0,
                     workers: int = 1, observable: str = "excited_population") -> CheckReport:
    """Ensemble mean vs master equation, and mean counts vs mean photon number."""
    if observable not in sc.observables:
        sc = sc.with_(observables=sc.observables + (observable,))
    ens = run_ensemble(sc, n_traj, base_seed=base_seed, workers=workers)
    me = solve_master_equation(sc)
    gap = float(np.max(np.abs(ens.mean[observable] - me.series[observable])))
    lines = [f"n_traj={n_traj}",
             f"max_t |mean {observable} - ME| = {gap:.4f} (tol {ME_TOL})"]
    ok = gap <= ME_TOL
    metrics = {"me_gap": gap}
    if sc.detection.scheme == "counting":
        mean_n = float(ens.final_counts.mean())
        se = float(ens.final_counts.std(ddof=1) / math.sqrt(n_traj)) if n_traj > 1 else 0.0
        target = sc.detection.efficiency * sc.field.mean_photons
        lines.append(f"mean counts at t_end = {mean_n:.4f} +- {se:.4f} (input photons x eta = {target:g})")
        lines.append("(counts also include photons the system emits on its own, so the target "
                     "applies to an initially unexcited emitter)")
        metrics.update(mean_counts=mean_n, counts_stderr=se)
        within = abs(mean_n - target) <= 3 * se if se > 0 else abs(mean_n - target) < 1e-12
        ok = ok and within
    return CheckReport("statistics", ok, lines, metrics)
