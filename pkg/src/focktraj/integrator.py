"""Time stepping of the hierarchy under counting, homodyne or heterodyne detection.

Two step methods are offered for the conditioned schemes:

``method="kraus"`` (default)
    Each step is the exact update of a one-bin collision model: the field in
    ``[t, t+dt)`` is a bin holding at most one photon with amplitude
    ``beta = xi(t + dt/2) sqrt(dt)``.  The hierarchy is first "cut" to remove
    the bin's share of the packet,

        sigma_{m,n} = rho_{m,n} - sqrt(mn) |beta|^2 sigma_{m-1,n-1},

    then every detector row ``<r|`` acts through
    ``M_r = I (x) K0_r + beta a^dag (x) K1_r`` with ``K_a = <r|U|a>`` and the
    exactly unitary bin propagator ``U``.  The map is completely positive,
    so states stay positive, and outcome probabilities sum to one exactly.
    It agrees with the SMEs to first order in dt.

``method="euler"``
    The first-order updates written directly in terms of the generators
    (``no_jump_update``, ``jump_update``, ``homodyne_map`` ...).  This is the
    literal form used for picture-duality and oracle convergence checks.
    It can produce small negative eigenvalues of order dt^2 per step.

Diffusive schemes record raw increments ``dy = sqrt(eta) K dt + dW``
(homodyne) or ``dy_phi = sqrt(eta/2) K_phi dt + dW_phi`` (heterodyne); the
``binary`` outcome mode records ``+-sqrt(dt)`` instead.

The envelope is sampled at step midpoints.  All trajectory batches have a
fixed size, so results never depend on how many workers run them.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import binmodel
from .errors import InfeasibleRecordError, NumericalError, RecordError, ValidationError
from .generators import PROB_TOL, LadderOperators, dag
from .hierarchy import (HierarchyState, block_matrix_to_full, full_to_block_matrix,
                        reduce_block_matrix)
from .observables import SeriesEvaluator
from .records import TrajectoryRecord
from .system_model import (BathChannel, FieldState, SystemOperators, WavePacket,
                           check_density_matrix)

SCHEMES = ("counting", "homodyne", "heterodyne", "none")
STEP_BOUND = 0.01
TRACE_TOL = 1e-8
HERM_TOL = 1e-10
EIG_TOL = 1e-8
INFEASIBLE = 1e-14
CHUNK = 200


@dataclass(frozen=True)
class Detection:
    """How the output field is monitored.

    scheme : counting | homodyne | heterodyne | none (unconditional)
    outcomes : gaussian | binary (diffusive schemes only)
    """

    scheme: str = "counting"
    phase: float = 0.0
    efficiency: float = 1.0
    outcomes: str = "gaussian"
    method: str = "kraus"

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValidationError(f"unknown scheme {self.scheme!r}")
        if not 0 <= self.efficiency <= 1:
            raise ValidationError("efficiency must lie in [0, 1]")
        if self.outcomes not in ("gaussian", "binary"):
            raise ValidationError(f"unknown outcome mode {self.outcomes!r}")
        if self.method not in ("kraus", "euler"):
            raise ValidationError(f"unknown step method {self.method!r}")


@dataclass(frozen=True)
class TimeGrid:
    t_start: float
    t_end: float
    dt: float

    def __post_init__(self):
        if not self.dt > 0:
            raise ValidationError("dt must be positive")
        if not self.t_end > self.t_start:
            raise ValidationError("t_end must exceed t_start")

    @property
    def n_steps(self) -> int:
        return int(round((self.t_end - self.t_start) / self.dt))

    @property
    def times(self) -> np.ndarray:
        return self.t_start + self.dt * np.arange(self.n_steps + 1)


def default_dt(sys: SystemOperators, bandwidth: Optional[float] = None) -> float:
    """1e-3 divided by the fastest of the emission rate and the bandwidth."""
    rate = max(sys.decay_norm, bandwidth or 0.0)
    return 1e-3 / rate if rate > 0 else 1e-3


@dataclass
class StepOutcome:
    """What one step measured and the numbers it was normalized with.

    value : outcome (count, increment, or pair of increments)
    probability : normalization used (probability, or density relative to the
        Gaussian reference measure for diffusive Gaussian outcomes)
    innovation : outcome minus its conditional mean
    mean : Pr(J) for counting, K_phi (or (K_0, K_pi/2)) for diffusive schemes
    """

    value: object
    probability: float
    innovation: object
    mean: object


@dataclass(frozen=True)
class Scenario:
    """Everything that defines a run apart from the seed."""

    system: SystemOperators
    packet: WavePacket
    field: FieldState
    initial_state: np.ndarray
    grid: TimeGrid
    detection: Detection = Detection()
    baths: Tuple[BathChannel, ...] = ()
    n_max: Optional[int] = None
    observables: Tuple[str, ...] = ("excited_population",)
    observable_matrices: Tuple = ()
    seed: Optional[int] = None

    def __post_init__(self):
        rho0 = check_density_matrix(self.initial_state, "initial system state")
        if rho0.shape[0] != self.system.dim:
            raise ValidationError("initial state dimension does not match the system")
        object.__setattr__(self, "initial_state", rho0)
        object.__setattr__(self, "baths", tuple(self.baths))
        object.__setattr__(self, "observables", tuple(self.observables))
        n = self.field.max_photons if self.n_max is None else int(self.n_max)
        if n < self.field.max_photons:
            raise ValidationError("n_max below the field's photon number")
        object.__setattr__(self, "n_max", n)
        for b in self.baths:
            if b.coupling.shape[0] != self.system.dim:
                raise ValidationError("bath coupling dimension does not match the system")

    def with_(self, **kw) -> "Scenario":
        from dataclasses import replace
        return replace(self, **kw)


def check_probabilities(p):
    """Vectorized form of the [0, 1] range check used by ``jump_probability``."""
    p = np.asarray(p)
    if np.any(p < -PROB_TOL) or np.any(p > 1 + PROB_TOL):
        bad = p[(p < -PROB_TOL) | (p > 1 + PROB_TOL)].ravel()[0]
        raise NumericalError(f"outcome probability {bad:.3e} outside [0, 1]; reduce the step size")


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed) % 2 ** 64)))


def trajectory_seed(base_seed: int, index: int) -> int:
    """Seed of ensemble member ``index``: ``(base_seed + index) mod 2**64``.

    SeedSequence hashes its entropy, so neighbouring integers give
    statistically independent streams.
    """
    return (int(base_seed) + int(index)) % 2 ** 64


def draw_noise(detection: Detection, n_steps: int, seed: int) -> np.ndarray:
    """Pre-drawn random numbers of one trajectory, consumed one row per step."""
    rng = _rng(seed)
    if detection.scheme == "heterodyne" and detection.outcomes == "gaussian":
        return rng.standard_normal((n_steps, 2))
    if detection.scheme in ("homodyne", "heterodyne") and detection.outcomes == "gaussian":
        return rng.standard_normal(n_steps)
    return rng.random(n_steps)


class Engine:
    """Batched stepper for one scenario.

    States are block matrices of shape ``(batch, (N+1)d, (N+1)d)``.

    Parameters
    ----------
    check : bool
        Verify trace, Hermiticity and positivity after every step.
    strict : bool
        Enforce ``dt (||L^dag L|| + N max|xi|^2) <= 0.01``.
    """

    def __init__(self, scenario: Scenario, check: bool = True, strict: bool = True):
        sc = scenario
        self.scenario = sc
        self.det = sc.detection
        self.sys = sc.system
        self.dim = d = sc.system.dim
        self.n_max = N = sc.n_max
        self.ops = LadderOperators(sc.system, N, sc.field, sc.baths)
        self.grid = sc.grid
        self.dt = dt = sc.grid.dt
        self.n_steps = sc.grid.n_steps
        self.times = sc.grid.times
        self.xi_mid = sc.packet(self.times[:-1] + dt / 2)
        self.xi_at = sc.packet(self.times)
        self.check = check
        self.diagnostics = {"steps": 0, "trace_deviation": 0.0, "hermiticity": 0.0,
                            "min_eigenvalue": np.inf}
        bound = dt * (sc.system.decay_norm + N * sc.packet.max_intensity())
        if strict and bound > STEP_BOUND:
            raise NumericalError(
                f"step too large: dt*(||L^dag L|| + N max|xi|^2) = {bound:.3g} > {STEP_BOUND}")
        U = binmodel.bin_unitary(sc.system, dt) if self.det.scheme != "none" else None
        self._setup_kraus(U)
        R0 = np.kron(np.eye(N + 1), sc.initial_state)
        self.R0 = R0

    # ---- collision-model pieces -------------------------------------------------
    def _setup_kraus(self, U):
        d, M = self.dim, self.n_max + 1
        IM = np.eye(M)
        self.U = U
        if U is not None:
            blk = binmodel.bin_blocks(U, d)  # blk[j, a] = <j|U|a>
            # M_j(beta) = I (x) <j|U|0> + beta a^dag (x) <j|U|1>
            self._Mj = [(np.kron(IM, blk[j, 0]), np.kron(self.ops.raise_, blk[j, 1]))
                        for j in (0, 1)]
        self._bath_kraus = None
        if self.scenario.baths:
            dt = self.dt
            jumps = []
            for b in self.scenario.baths:
                Lt, n = b.coupling, b.mean_occupation
                jumps.append(math.sqrt((n + 1) * dt) * Lt)
                if n > 0:
                    jumps.append(math.sqrt(n * dt) * dag(Lt))
            # K0 = sqrt(I - sum J^dag J) makes the channel exactly trace preserving
            w, v = np.linalg.eigh(np.eye(self.dim) - sum(dag(J) @ J for J in jumps))
            if w.min() < 0:
                raise NumericalError("bath rates too large for this step size")
            K0 = (v * np.sqrt(w)) @ dag(v)
            self._bath_kraus = [np.kron(IM, K) for K in [K0] + jumps]

    def _cut(self, R, beta):
        b2 = abs(beta) ** 2
        if self.n_max == 0 or b2 == 0:
            return R
        A, Ad = self.ops.A, dag(self.ops.A)
        S = R
        for _ in range(self.n_max):
            S = R - b2 * (A @ S @ Ad)
        return S

    def _bin_products(self, R, k):
        """X0 = M0 s M0^dag, X1 = M1 s M1^dag, Z = M1 s M0^dag for the cut state s."""
        beta = self.xi_mid[k] * math.sqrt(self.dt)
        sig = self._cut(R, beta)
        M0 = self._Mj[0][0] + beta * self._Mj[0][1]
        M1 = self._Mj[1][0] + beta * self._Mj[1][1]
        sM0 = sig @ dag(M0)
        X0 = M0 @ sM0
        Z = M1 @ sM0
        X1 = M1 @ sig @ dag(M1)
        return X0, X1, Z, M1, sig

    def _apply_baths(self, R):
        if self._bath_kraus is None:
            return R
        out = 0
        for K in self._bath_kraus:
            out = out + K @ R @ dag(K)
        return out

    # ---- helpers ------------------------------------------------------------------
    def wtr(self, R):
        return self.ops.wtrace(R)

    def _normalize(self, Rbar, p, replay):
        p = np.asarray(p, float)
        if replay and np.any(p < INFEASIBLE):
            raise InfeasibleRecordError("record contains an outcome of zero probability")
        if np.any(p <= 0):
            raise NumericalError("non-positive outcome weight; reduce the step size")
        return Rbar / p[:, None, None]

    def _finish(self, R, k):
        if self.det.method == "kraus":
            R = self._apply_baths(R)
        tr = self.wtr(R)
        if self.check:
            self._checked(R, tr, k)
        R = R / tr[:, None, None]
        R = 0.5 * (R + dag(R))
        if self.check:
            self._check_positive(R, k)
        return R

    def _checked(self, R, tr, k):
        """Trace of the normalized update and Hermiticity pairing, before symmetrizing."""
        dev = float(np.max(np.abs(tr - 1)))
        herm = float(np.max(np.abs(R - dag(R))))
        d = self.diagnostics
        d["trace_deviation"] = max(d["trace_deviation"], dev)
        d["hermiticity"] = max(d["hermiticity"], herm)
        d["steps"] += 1
        if dev > TRACE_TOL:
            raise NumericalError(f"field-weighted trace off by {dev:.2e} at t={self.times[k + 1]:g}")
        if herm > HERM_TOL:
            raise NumericalError(f"Hermiticity pairing broken by {herm:.2e} at t={self.times[k + 1]:g}")

    def _check_positive(self, R, k):
        rho = reduce_block_matrix(R, self.ops.coeffs, self.dim)
        emin = float(np.linalg.eigvalsh(rho).min())
        d = self.diagnostics
        d["min_eigenvalue"] = min(d["min_eigenvalue"], emin)
        if emin < -EIG_TOL:
            raise NumericalError(
                f"reduced state has eigenvalue {emin:.2e} at t={self.times[k + 1]:g}; "
                "reduce dt or use method='kraus'")

    # ---- steps ----------------------------------------------------------------------
    def step(self, R, k, noise=None, outcome=None):
        """Advance batch ``R`` across step ``k``.

        Exactly one of ``noise`` (per-trajectory random numbers) and
        ``outcome`` (replayed record values) is given for conditioned schemes.
        Returns the new batch and a dict of per-trajectory arrays
        (value, probability, innovation, mean).
        """
        s = self.det.scheme
        if s == "none":
            return self.step_unconditional(R, k), None
        if s == "counting":
            Rn, info = self._step_counting(R, k, noise, outcome)
        elif self.det.outcomes == "binary":
            Rn, info = self._step_binary(R, k, noise, outcome)
        elif s == "homodyne":
            Rn, info = self._step_homodyne(R, k, noise, outcome)
        else:
            Rn, info = self._step_heterodyne(R, k, noise, outcome)
        return self._finish(Rn, k), info

    def step_unconditional(self, R, k):
        """Classical RK4 on dR/dt = K(R) with xi at t, t+dt/2, t+dt."""
        dt, ops = self.dt, self.ops
        x0, xm, x1 = self.xi_at[k], self.xi_mid[k], self.xi_at[k + 1]
        k1 = ops.apply_generator(R, x0)
        k2 = ops.apply_generator(R + 0.5 * dt * k1, xm)
        k3 = ops.apply_generator(R + 0.5 * dt * k2, xm)
        k4 = ops.apply_generator(R + dt * k3, x1)
        Rn = R + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        tr = self.wtr(Rn)
        if self.check:
            self._checked(Rn, tr, k)
        R2 = Rn / tr[:, None, None]
        R2 = 0.5 * (R2 + dag(R2))
        if self.check:
            self._check_positive(R2, k)
        return R2

    def _step_counting(self, R, k, noise, outcome):
        eta, dt = self.det.efficiency, self.dt
        xi = self.xi_mid[k]
        if self.det.method == "kraus":
            X0, X1, _, _, _ = self._bin_products(R, k)
            click = eta * X1
            quiet = X0 + (1 - eta) * X1
            pr_j = self.wtr(X1)
        else:
            KR = self.ops.apply_generator(R, xi)
            JR = self.ops.apply_jump(R, xi)
            click = eta * dt * JR
            quiet = R + dt * KR - eta * dt * JR
            pr_j = dt * self.wtr(JR)
        p1 = self.wtr(click)
        check_probabilities(p1)
        if outcome is None:
            dn = (noise < p1).astype(np.int64)
        else:
            dn = np.asarray(outcome, np.int64)
        p = np.where(dn == 1, p1, self.wtr(quiet))
        Rbar = np.where((dn == 1)[:, None, None], click, quiet)
        Rn = self._normalize(Rbar, p, outcome is not None)
        return Rn, dict(value=dn, probability=p, innovation=dn - p1, mean=pr_j)

    def _step_binary(self, R, k, noise, outcome):
        eta, dt, phi = self.det.efficiency, self.dt, self.det.phase
        xi = self.xi_mid[k]
        sq = math.sqrt(dt)
        het = self.det.scheme == "heterodyne"
        if het:
            labels = [(1, 1), (1, -1), (-1, 1), (-1, -1)]
        else:
            labels = [1, -1]
        if self.det.method == "kraus":
            X0, X1, Z, _, _ = self._bin_products(R, k)
            base = X0 + X1
            if het:
                branches = []
                for s, r in labels:
                    c = math.sqrt(eta) * (s - 1j * r) / math.sqrt(2)
                    cz = c * Z
                    branches.append(0.25 * (base + cz + dag(cz)))
            else:
                cz = math.sqrt(eta) * np.exp(-1j * phi) * Z
                Y = cz + dag(cz)
                branches = [0.5 * (base + Y), 0.5 * (base - Y)]
            if het:
                means = (self.wtr(self.ops.apply_conditioning(R, xi, 0.0)[0]),
                         self.wtr(self.ops.apply_conditioning(R, xi, math.pi / 2)[0]))
            else:
                means = self.wtr(self.ops.apply_conditioning(R, xi, phi)[0])
        else:
            drift = R + dt * self.ops.apply_generator(R, xi)
            if het:
                c0, K0 = self.ops.apply_conditioning(R, xi, 0.0)
                c1, K1 = self.ops.apply_conditioning(R, xi, math.pi / 2)
                a = math.sqrt(eta * dt / 2)
                branches = [0.25 * (drift + a * (s * c0 + r * c1)) for s, r in labels]
                means = (K0, K1)
            else:
                c, K = self.ops.apply_conditioning(R, xi, phi)
                a = math.sqrt(eta * dt)
                branches = [0.5 * (drift + a * c), 0.5 * (drift - a * c)]
                means = K
        probs = np.stack([self.wtr(b) for b in branches], axis=1)  # (batch, n_out)
        check_probabilities(probs)
        if outcome is None:
            cum = np.cumsum(probs, axis=1)
            cum[:, -1] = np.inf
            idx = np.argmax(noise[:, None] < cum, axis=1)
        else:
            out = np.asarray(outcome, float)
            if het:
                sgn = np.where(out >= 0, 1, -1)
                idx = np.array([labels.index((int(a), int(b))) for a, b in sgn])
            else:
                idx = np.where(out >= 0, 0, 1)
        stack = np.stack(branches, axis=1)
        rows = np.arange(len(idx))
        Rbar = stack[rows, idx]
        p = probs[rows, idx]
        Rn = self._normalize(Rbar, p, outcome is not None)
        if het:
            signs = np.array([labels[i] for i in idx], float)
            value = sq * signs
            mean_inc = sq * np.stack([probs[:, 0] + probs[:, 1] - probs[:, 2] - probs[:, 3],
                                      probs[:, 0] - probs[:, 1] + probs[:, 2] - probs[:, 3]], axis=1)
        else:
            value = sq * np.where(idx == 0, 1.0, -1.0)
            mean_inc = sq * (probs[:, 0] - probs[:, 1])
        return Rn, dict(value=value, probability=p, innovation=value - mean_inc, mean=means)

    def _step_homodyne(self, R, k, noise, outcome):
        eta, dt, phi = self.det.efficiency, self.dt, self.det.phase
        xi = self.xi_mid[k]
        sq = math.sqrt(dt)
        cond, K = self.ops.apply_conditioning(R, xi, phi)
        if outcome is None:
            dy = math.sqrt(eta) * K * dt + sq * noise
        else:
            dy = np.asarray(outcome, float)
        innov = dy - math.sqrt(eta) * K * dt
        if self.det.method == "kraus":
            X0, X1, Z, _, _ = self._bin_products(R, k)
            x = (math.sqrt(eta) * np.exp(-1j * phi) * dy / sq)[:, None, None]
            xz = x * Z
            Rbar = X0 + (np.abs(x) ** 2 + (1 - eta)) * X1 + xz + dag(xz)
        else:
            drift = R + dt * self.ops.apply_generator(R, xi)
            Rbar = drift + (math.sqrt(eta) * innov)[:, None, None] * (cond - K[:, None, None] * R)
        p = self.wtr(Rbar)
        Rn = self._normalize(Rbar, p, outcome is not None)
        return Rn, dict(value=dy, probability=p, innovation=innov, mean=K)

    def _step_heterodyne(self, R, k, noise, outcome):
        eta, dt = self.det.efficiency, self.dt
        xi = self.xi_mid[k]
        sq = math.sqrt(dt)
        c0, K0 = self.ops.apply_conditioning(R, xi, 0.0)
        c1, K1 = self.ops.apply_conditioning(R, xi, math.pi / 2)
        Kv = np.stack([K0, K1], axis=1)
        a = math.sqrt(eta / 2)
        if outcome is None:
            dy = a * Kv * dt + sq * noise
        else:
            dy = np.asarray(outcome, float).reshape(-1, 2)
        innov = dy - a * Kv * dt
        if self.det.method == "kraus":
            X0, X1, Z, _, _ = self._bin_products(R, k)
            x = (math.sqrt(eta) * (dy[:, 0] - 1j * dy[:, 1]) / (math.sqrt(2) * sq))[:, None, None]
            xz = x * Z
            Rbar = X0 + (np.abs(x) ** 2 + (1 - eta)) * X1 + xz + dag(xz)
        else:
            drift = R + dt * self.ops.apply_generator(R, xi)
            h0 = c0 - K0[:, None, None] * R
            h1 = c1 - K1[:, None, None] * R
            Rbar = drift + a * (innov[:, 0, None, None] * h0 + innov[:, 1, None, None] * h1)
        p = self.wtr(Rbar)
        Rn = self._normalize(Rbar, p, outcome is not None)
        return Rn, dict(value=dy, probability=p, innovation=innov, mean=(K0, K1))

    # ---- whole runs ------------------------------------------------------------------
    def initial_batch(self, batch: int) -> np.ndarray:
        return np.broadcast_to(self.R0, (batch,) + self.R0.shape).copy()

    def snapshot(self, R, k) -> HierarchyState:
        return HierarchyState.from_full(self.times[k], block_matrix_to_full(R, self.dim))


@dataclass
class TrajectoryResult:
    times: np.ndarray
    series: Dict[str, np.ndarray]
    record: Optional[TrajectoryRecord]
    snapshots: List[HierarchyState] = field(default_factory=list)
    outcomes: List[StepOutcome] = field(default_factory=list)
    diagnostics: Dict[str, float] = field(default_factory=dict)

    @property
    def final(self) -> HierarchyState:
        return self.snapshots[-1]


def _record_from(det: Detection, grid: TimeGrid, values, seed) -> Optional[TrajectoryRecord]:
    if det.scheme == "none":
        return None
    return TrajectoryRecord(scheme=det.scheme, dt=grid.dt, t_start=grid.t_start,
                            outcomes=np.asarray(values), phase=det.phase,
                            efficiency=det.efficiency, outcome_kind=det.outcomes, seed=seed)


def _check_record(rec: TrajectoryRecord, sc: Scenario):
    det, grid = sc.detection, sc.grid
    if rec.scheme != det.scheme:
        raise RecordError(f"record scheme {rec.scheme} does not match detection {det.scheme}")
    if rec.scheme != "counting" and rec.outcome_kind != det.outcomes:
        raise RecordError("record outcome mode does not match the detection config")
    if abs(rec.dt - grid.dt) > 1e-12 * max(1.0, grid.dt) or abs(rec.t_start - grid.t_start) > 1e-9:
        raise RecordError("record grid does not match the scenario grid")
    if len(rec) != grid.n_steps:
        raise RecordError(f"record has {len(rec)} steps, scenario needs {grid.n_steps}")


def run_trajectory(scenario: Scenario, seed: Optional[int] = None,
                   record: Optional[TrajectoryRecord] = None, save_every: int = 1,
                   keep_snapshots: bool = True, check: bool = True,
                   strict: bool = True) -> TrajectoryResult:
    """Simulate (``seed``) or re-condition on (``record``) one trajectory.

    Deterministic in (scenario, seed): the same seed gives a bit-identical
    record and state series on one platform.
    """
    eng = Engine(scenario, check=check, strict=strict)
    det = scenario.detection
    if record is not None:
        _check_record(record, scenario)
        seed = record.seed
    elif det.scheme != "none" and seed is None:
        seed = scenario.seed if scenario.seed is not None else 0
    noise = None
    if record is None and det.scheme != "none":
        noise = draw_noise(det, eng.n_steps, seed)
    evaluator = SeriesEvaluator(scenario.observables, eng.ops, det.phase,
                                dict(scenario.observable_matrices))
    R = eng.initial_batch(1)
    counts = np.zeros(1)
    keep = [0]
    rows = [evaluator(R, eng.xi_at[0], counts)]
    snaps = [eng.snapshot(R[0], 0)] if keep_snapshots else []
    outcomes = []
    values = []
    for k in range(eng.n_steps):
        nz = None if noise is None else noise[k:k + 1]
        oc = None if record is None else record.outcomes[k:k + 1]
        try:
            R, info = eng.step(R, k, nz, oc)
        except (NumericalError, InfeasibleRecordError) as exc:
            raise type(exc)(f"{exc} (step {k}, t={eng.times[k]:g})") from exc
        if info is not None:
            v = info["value"][0]
            values.append(v)
            mean = info["mean"]
            mean = tuple(float(m[0]) for m in mean) if isinstance(mean, tuple) else float(mean[0])
            outcomes.append(StepOutcome(v, float(info["probability"][0]),
                                        info["innovation"][0], mean))
            if det.scheme == "counting":
                counts = counts + v
        if (k + 1) % save_every == 0 or k + 1 == eng.n_steps:
            keep.append(k + 1)
            rows.append(evaluator(R, eng.xi_at[k + 1], counts))
            if keep_snapshots:
                snaps.append(eng.snapshot(R[0], k + 1))
    series = {n: np.array([r[n][0] for r in rows]) for n in evaluator.names}
    rec = record if record is not None else _record_from(det, scenario.grid, values, seed)
    return TrajectoryResult(eng.times[keep], series, rec, snaps, outcomes, dict(eng.diagnostics))


@dataclass
class EnsembleSummary:
    times: np.ndarray
    n_traj: int
    mean: Dict[str, np.ndarray]
    variance: Dict[str, np.ndarray]
    final_counts: np.ndarray
    diagnostics: Dict[str, float] = field(default_factory=dict)

    def stderr(self, name):
        return np.sqrt(self.variance[name] / max(self.n_traj, 1))


def _run_chunk(args):
    scenario, seeds, save_every, check = args
    eng = Engine(scenario, check=check)
    det = scenario.detection
    B = len(seeds)
    noise = None
    if det.scheme != "none":
        noise = np.stack([draw_noise(det, eng.n_steps, s) for s in seeds])
    evaluator = SeriesEvaluator(scenario.observables, eng.ops, det.phase,
                                dict(scenario.observable_matrices))
    R = eng.initial_batch(B)
    counts = np.zeros(B)
    rows = [evaluator(R, eng.xi_at[0], counts)]
    for k in range(eng.n_steps):
        nz = None if noise is None else noise[:, k]
        R, info = eng.step(R, k, nz, None)
        if det.scheme == "counting":
            counts = counts + info["value"]
        if (k + 1) % save_every == 0 or k + 1 == eng.n_steps:
            rows.append(evaluator(R, eng.xi_at[k + 1], counts))
    sums = {n: np.array([r[n].sum() for r in rows]) for n in evaluator.names}
    sq = {n: np.array([(r[n] ** 2).sum() for r in rows]) for n in evaluator.names}
    return sums, sq, counts, eng.diagnostics


def ensemble_times(grid: TimeGrid, save_every: int) -> np.ndarray:
    n = grid.n_steps
    keep = [0] + [k + 1 for k in range(n) if (k + 1) % save_every == 0 or k + 1 == n]
    return grid.times[keep]


def run_ensemble(scenario: Scenario, n_traj: int, base_seed: int = 0, workers: int = 1,
                 save_every: int = 1, check: bool = True) -> EnsembleSummary:
    """Pointwise mean and variance of the scenario's observables.

    Trajectory ``i`` uses seed :func:`trajectory_seed` ``(base_seed, i)``.
    Trajectories are grouped in fixed chunks of ``CHUNK`` and chunk results
    are combined in index order, so the summary is identical for any
    ``workers``.
    """
    if n_traj < 1:
        raise ValidationError("n_traj must be >= 1")
    Engine(scenario, check=False)  # validate before fanning out
    seeds = [trajectory_seed(base_seed, i) for i in range(n_traj)]
    tasks = [(scenario, seeds[i:i + CHUNK], save_every, check) for i in range(0, n_traj, CHUNK)]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_chunk, tasks))
    else:
        results = [_run_chunk(t) for t in tasks]
    names = list(results[0][0])
    tot = {n: sum(r[0][n] for r in results) for n in names}
    tot2 = {n: sum(r[1][n] for r in results) for n in names}
    mean = {n: tot[n] / n_traj for n in names}
    var = {n: np.maximum(tot2[n] / n_traj - mean[n] ** 2, 0.0) * (n_traj / max(n_traj - 1, 1))
           for n in names}
    if n_traj == 1:
        var = {n: np.zeros_like(mean[n]) for n in names}
    final_counts = np.concatenate([r[2] for r in results])
    diags = [r[3] for r in results]
    diag = {"steps": sum(d["steps"] for d in diags),
            "trace_deviation": max(d["trace_deviation"] for d in diags),
            "hermiticity": max(d["hermiticity"] for d in diags),
            "min_eigenvalue": min(d["min_eigenvalue"] for d in diags)}
    return EnsembleSummary(ensemble_times(scenario.grid, save_every), n_traj, mean, var,
                           final_counts, diag)


def solve_master_equation(scenario: Scenario, save_every: int = 1,
                          keep_snapshots: bool = False) -> TrajectoryResult:
    """Unconditional evolution of the hierarchy (RK4), with observables."""
    sc = scenario.with_(detection=Detection("none"))
    return run_trajectory(sc, keep_snapshots=keep_snapshots, save_every=save_every)


# ---- single-step API on HierarchyState values -------------------------------------------
def _one_step(h: HierarchyState, sys, packet, field, dt, detection, source, baths=(),
              check=True):
    sc = Scenario(system=sys, packet=packet, field=field,
                  initial_state=np.eye(sys.dim) / sys.dim,
                  grid=TimeGrid(h.time, h.time + dt, dt), detection=detection,
                  baths=tuple(baths), n_max=h.n_max)
    eng = Engine(sc, check=check)
    R = full_to_block_matrix(h.full())[None]
    if detection.scheme == "none":
        return eng.snapshot(eng.step_unconditional(R, 0)[0], 1), None
    if isinstance(source, np.random.Generator):
        if detection.scheme == "heterodyne" and detection.outcomes == "gaussian":
            noise, outcome = source.standard_normal((1, 2)), None
        elif detection.scheme != "counting" and detection.outcomes == "gaussian":
            noise, outcome = source.standard_normal(1), None
        else:
            noise, outcome = source.random(1), None
    else:
        noise, outcome = None, np.asarray(source)[None]
    Rn, info = eng.step(R, 0, noise, outcome)
    mean = info["mean"]
    mean = tuple(float(m[0]) for m in mean) if isinstance(mean, tuple) else float(mean[0])
    out = StepOutcome(info["value"][0], float(info["probability"][0]), info["innovation"][0], mean)
    return eng.snapshot(Rn[0], 1), out


def step_counting(h, sys, packet, field, dt, efficiency=1.0, source=None, method="kraus",
                  baths=()):
    """One counting step; ``source`` is a Generator (sample) or an outcome 0/1 (replay)."""
    det = Detection("counting", efficiency=efficiency, method=method)
    return _one_step(h, sys, packet, field, dt, det, source, baths)


def step_homodyne(h, sys, packet, field, dt, phase=0.0, efficiency=1.0, source=None,
                  method="kraus", outcomes="gaussian", baths=()):
    det = Detection("homodyne", phase, efficiency, outcomes, method)
    return _one_step(h, sys, packet, field, dt, det, source, baths)


def step_heterodyne(h, sys, packet, field, dt, efficiency=1.0, source=None, method="kraus",
                    outcomes="gaussian", baths=()):
    det = Detection("heterodyne", 0.0, efficiency, outcomes, method)
    return _one_step(h, sys, packet, field, dt, det, source, baths)


def step_unconditional(h, sys, packet, field, dt, baths=()):
    return _one_step(h, sys, packet, field, dt, Detection("none"), None, baths)[0]
