"""Stand-alone vacuum-input trajectory stepper used to build the stored reference data.

Written directly on the system density matrix with no hierarchy, ladder
operators or package code, so the regression test compares two independent
implementations.  Running this file regenerates ``data/vacuum_*.csv``.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

DATA = Path(__file__).parent / "data"

GAMMA = 1.0
RABI = 2.0
DT = 1e-3
STEPS = 2000
T0 = 0.0
PHASE = 0.3

SM = np.array([[0, 1], [0, 0]], complex)          # |g><e| in (|g>, |e>) order
SX = np.array([[0, 1], [1, 0]], complex)
L = math.sqrt(GAMMA) * SM
H = 0.5 * RABI * SX
RHO0 = np.array([[0, 0], [0, 1]], complex)        # excited
CASES = (("counting", "kraus"), ("homodyne", "kraus"))


def _dag(a):
    return a.conj().T


def kraus_pair(dt=DT):
    """<0|U|0> and <1|U|0> of the unitarized first-order bin propagator (S = I)."""
    d = 2
    G = 1j * H + 0.5 * _dag(L) @ L
    U = np.zeros((2 * d, 2 * d), complex)
    # index s*2 + b; blocks U[(.,b'),(.,b)]
    blk = lambda bo, bi: np.ix_([s * 2 + bo for s in range(d)], [s * 2 + bi for s in range(d)])
    U[blk(0, 0)] = np.eye(d) - dt * G
    U[blk(1, 1)] = np.eye(d) - dt * G
    U[blk(0, 1)] = -math.sqrt(dt) * _dag(L)
    U[blk(1, 0)] = math.sqrt(dt) * L
    W, _, Vh = np.linalg.svd(U)
    Up = W @ Vh
    return Up[blk(0, 0)], Up[blk(1, 0)]


def lindblad_rhs(rho):
    LdL = _dag(L) @ L
    return -1j * (H @ rho - rho @ H) + L @ rho @ _dag(L) - 0.5 * (LdL @ rho + rho @ LdL)


def run(scheme: str, method: str, seed: int):
    rng = np.random.default_rng(seed)
    M0, M1 = kraus_pair()
    rho = RHO0.copy()
    rows = []
    e = np.exp(-1j * PHASE)
    for k in range(STEPS):
        if scheme == "counting":
            if method == "kraus":
                click, quiet = M1 @ rho @ _dag(M1), M0 @ rho @ _dag(M0)
            else:
                jump = L @ rho @ _dag(L)
                click = DT * jump
                quiet = rho + DT * lindblad_rhs(rho) - DT * jump
            p1 = np.trace(click).real
            out = 1 if rng.random() < p1 else 0
            new = click if out else quiet
        else:
            K = np.trace(e * L @ rho + np.conj(e) * rho @ _dag(L)).real
            dy = K * DT + math.sqrt(DT) * rng.standard_normal()
            out = dy
            if method == "kraus":
                x = e * dy / math.sqrt(DT)
                X0 = M0 @ rho @ _dag(M0)
                X1 = M1 @ rho @ _dag(M1)
                Z = M1 @ rho @ _dag(M0)
                new = X0 + abs(x) ** 2 * X1 + x * Z + np.conj(x) * _dag(Z)
            else:
                cond = e * L @ rho + np.conj(e) * rho @ _dag(L) - K * rho
                new = rho + DT * lindblad_rhs(rho) + (dy - K * DT) * cond
        rho = new / np.trace(new).real
        rho = 0.5 * (rho + _dag(rho))
        rows.append((k, out, rho.copy()))
    return rows


def write(scheme, method, seed):
    rows = run(scheme, method, seed)
    path = DATA / f"vacuum_{scheme}_{method}.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "outcome"] + [f"{p}{i}{j}" for i in range(2) for j in range(2)
                                          for p in ("re", "im")])
        for k, out, rho in rows:
            vals = []
            for i in range(2):
                for j in range(2):
                    vals += [format(rho[i, j].real, ".17g"), format(rho[i, j].imag, ".17g")]
            w.writerow([k, format(out, ".17g") if scheme != "counting" else out] + vals)
    return path


def read(scheme, method):
    """(outcomes, states) from the stored file; states[k] is after step k."""
    path = DATA / f"vacuum_{scheme}_{method}.csv"
    outs, states = [], []
    with open(path) as fh:
        for row in csv.DictReader(fh):
            outs.append(float(row["outcome"]))
            rho = np.array([[complex(float(row[f"re{i}{j}"]), float(row[f"im{i}{j}"]))
                             for j in range(2)] for i in range(2)])
            states.append(rho)
    return np.array(outs), np.array(states)


if __name__ == "__main__":
    DATA.mkdir(exist_ok=True)
    # only the Kraus forms: the first-order updates are not positivity
    # preserving on pure states (O(dt) negative eigenvalues for homodyne)
    for i, (scheme, method) in enumerate(CASES):
        print(write(scheme, method, seed=100 + i))
