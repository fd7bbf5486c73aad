"""Acceptance criteria for the package, one test per criterion.

Each test prints a single ``[PASS]``/``[FAIL]`` line (visible under
``pytest -v`` or ``-s``) with the measured quantity next to its tolerance,
then asserts.  Tolerances are fixed here and must not be loosened.
"""

import math

import numpy as np
import pytest

import reference_vacuum as ref
from focktraj import (FieldState, SystemOperators, TrajectoryRecord, captured_photon_fraction,
                      make_gaussian_wavepacket, reduced_state, run_ensemble, run_trajectory,
                      solve_master_equation)
from focktraj.heisenberg import duality_error, paired_run
from focktraj.integrator import Detection, Scenario, TimeGrid
from focktraj.scenario import load_scenario, load_scenario_dict, scenario_from_dict
from focktraj.system_model import SIGMA_X, SIGMA_Y, SIGMA_Z
from focktraj.validation import check_invariants, check_oracle, random_pure_state, \
    random_qubit_system

# every ensemble/trajectory run here feeds the invariant criterion
DIAGNOSTICS = []


def report(capsys, label, ok, detail):
    with capsys.disabled():
        print(f"\n[{'PASS' if ok else 'FAIL'}] {label}: {detail}")


def _merge(diags):
    return {"steps": sum(d["steps"] for d in diags),
            "trace_deviation": max(d["trace_deviation"] for d in diags),
            "hermiticity": max(d["hermiticity"] for d in diags),
            "min_eigenvalue": min(d["min_eigenvalue"] for d in diags)}


def test_1_truncation_fractions(capsys):
    want = {2: 0.04, 6: 0.62, 10: 0.97}
    got = {t: captured_photon_fraction(math.sqrt(5.0), t) for t in want}
    ok = all(abs(got[t] - want[t]) <= 0.005 for t in want)
    report(capsys, "1 truncation fractions", ok,
           ", ".join(f"n_trunc={t}: {got[t]:.4f} (want {want[t]} +- 0.005)" for t in want))
    assert ok


@pytest.fixture(scope="module")
def fock1_ensemble():
    sc = load_scenario("preset:atom-fock1-counting")
    ens = run_ensemble(sc, 1000, base_seed=0)
    DIAGNOSTICS.append(ens.diagnostics)
    return sc, ens


def test_2_exact_counts(capsys, fock1_ensemble):
    _, ens1 = fock1_ensemble
    sc2 = load_scenario("preset:atom-fock2-counting")
    ens2 = run_ensemble(sc2, 500, base_seed=0)
    DIAGNOSTICS.append(ens2.diagnostics)
    c1, c2 = ens1.final_counts[:500], ens2.final_counts
    ok = bool(np.all(c1 == 1) and np.all(c2 == 2))
    report(capsys, "2 exact photon counts", ok,
           f"N=1: counts in {sorted({int(x) for x in c1})} over {len(c1)} trajectories; "
           f"N=2: counts in {sorted({int(x) for x in c2})} over {len(c2)} trajectories")
    assert ok


def test_3_ensemble_matches_master_equation(capsys, fock1_ensemble):
    sc, ens = fock1_ensemble
    me = solve_master_equation(sc)
    gap = float(np.max(np.abs(ens.mean["excited_population"] - me.series["excited_population"])))
    c = ens.final_counts
    mean, se = float(c.mean()), float(c.std(ddof=1) / math.sqrt(len(c)))
    counts_ok = abs(mean - 1) <= 3 * se if se > 0 else abs(mean - 1) < 1e-12
    ok = gap <= 0.05 and counts_ok
    report(capsys, "3 ensemble vs master equation", ok,
           f"max |mean P_e - ME| = {gap:.4f} (tol 0.05) over {ens.n_traj} trajectories; "
           f"mean counts {mean:.4f} +- {se:.4f} (want 1 within 3 SE)")
    assert ok


@pytest.mark.parametrize("scheme", ["counting", "homodyne"])
def test_4_oracle_equivalence(capsys, scheme):
    sc = load_scenario(f"preset:atom-fock1-{scheme}")
    if scheme == "homodyne":
        sc = sc.with_(detection=Detection("homodyne", 0.0, 1.0, "binary", "euler"))
    rep = check_oracle(sc, bins=8, records=5, seed=0)
    m = rep.metrics
    ok = m["worst"] <= 0.02 and 1.5 <= m["ratio"] <= 3.0
    report(capsys, f"4 oracle equivalence ({scheme})", ok,
           f"worst trace distance {m['worst']:.3e} (tol 0.02), halving ratio {m['ratio']:.3f} "
           f"(want [1.5, 3])")
    assert ok


def test_5_picture_duality(capsys):
    rng = np.random.default_rng(2024)
    ops = (np.eye(2, dtype=complex), SIGMA_X, SIGMA_Y, SIGMA_Z)
    packet = make_gaussian_wavepacket(1.0)
    dt = 1e-3
    worst, runs = 0.0, 0
    for draw in range(10):
        sys = random_qubit_system(rng)
        rho0 = random_pure_state(rng) * 0.7 + 0.15 * np.eye(2)
        for n in (1, 2):
            for scheme in ("counting", "homodyne"):
                sc = Scenario(sys, packet, FieldState.fock(n), rho0,
                              TimeGrid(-0.05, -0.05 + 100 * dt, dt),
                              Detection(scheme, phase=0.3, method="euler"))
                run = paired_run(sc, seed=draw, recompute=True)
                worst = max(worst, duality_error(run, rho0, ops))
                runs += 1
    ok = worst <= 1e-8
    report(capsys, "5 picture duality", ok,
           f"max |Tr[rho0 pi_mn[X]] - Tr[X rho_nm]| = {worst:.3e} over {runs} paired runs (tol 1e-8)")
    assert ok


def test_6_invariants(capsys):
    lines, ok = [], True
    for name, outcomes in (("atom-fock1-homodyne", "gaussian"), ("atom-fock2-counting", None)):
        rep = check_invariants(load_scenario(f"preset:{name}"), seed=1)
        DIAGNOSTICS.append({k: rep.metrics[k] for k in
                            ("steps", "trace_deviation", "hermiticity", "min_eigenvalue")})
        ok = ok and rep.passed
        if "innovation_z" in rep.metrics:
            lines.append(f"homodyne innovations: |z| {rep.metrics['innovation_z']:.2f} (want <= 3), "
                         f"variance/dt {rep.metrics['variance_ratio_min']:.4f} (want [0.95, 1.05]) "
                         f"over {rep.metrics['steps']} samples")
    het = load_scenario("preset:atom-fock1-homodyne")
    het = het.with_(detection=Detection("heterodyne"))
    rep = check_invariants(het, seed=2)
    DIAGNOSTICS.append({k: rep.metrics[k] for k in
                        ("steps", "trace_deviation", "hermiticity", "min_eigenvalue")})
    ok = ok and rep.passed
    lines.append(f"heterodyne innovations: |z| {rep.metrics['innovation_z']:.2f}, variance/dt in "
                 f"[{rep.metrics['variance_ratio_min']:.4f}, {rep.metrics['variance_ratio_max']:.4f}]")
    d = _merge(DIAGNOSTICS)
    inv_ok = (d["trace_deviation"] <= 1e-8 and d["hermiticity"] <= 1e-10
              and d["min_eigenvalue"] >= -1e-8)
    ok = ok and inv_ok
    lines.insert(0, f"{d['steps']} checked steps: trace deviation {d['trace_deviation']:.2e} "
                    f"(tol 1e-8), Hermiticity {d['hermiticity']:.2e} (tol 1e-10), "
                    f"min eigenvalue {d['min_eigenvalue']:.2e} (>= -1e-8)")
    report(capsys, "6 invariant suite", ok, "; ".join(lines))
    assert ok


def test_7_purity(capsys):
    coh = run_trajectory(load_scenario("preset:atom-coherent1-trunc8-homodyne"), seed=0,
                         keep_snapshots=False)
    DIAGNOSTICS.append(coh.diagnostics)
    coh_min = float(coh.series["purity"].min())
    fock = run_trajectory(load_scenario("preset:atom-fock1-counting"), seed=0, keep_snapshots=False)
    DIAGNOSTICS.append(fock.diagnostics)
    p, t = fock.series["purity"], fock.times
    mid = (t > -2) & (t < 2)
    after = t >= 8
    dip, final = float(p[mid].min()), float(p[after].min())
    ok = coh_min >= 0.99 and dip < 0.99 and final >= 0.999
    report(capsys, "7 purity", ok,
           f"coherent <n>=1 trunc 8 homodyne min purity {coh_min:.6f} (want >= 0.99); "
           f"Fock N=1 counting mid-packet min {dip:.4f} (want < 0.99), "
           f"after packet min {final:.6f} (want >= 0.999)")
    assert ok


def test_8_jump_up(capsys):
    sc = load_scenario("preset:atom-fock2-counting")
    found = None
    for seed in range(20):
        rec = run_trajectory(sc, seed=seed, keep_snapshots=False).record
        res = run_trajectory(sc, record=rec, keep_snapshots=False)
        DIAGNOSTICS.append(res.diagnostics)
        pe = res.series["excited_population"]
        for k in np.nonzero(rec.outcomes)[0]:
            if pe[k + 1] > pe[k]:
                found = (seed, res.times[k + 1], pe[k], pe[k + 1])
                break
        if found:
            break
    ok = found is not None
    detail = (f"seed {found[0]}: P_e {found[2]:.4f} -> {found[3]:.4f} across the count at "
              f"t = {found[1]:.3f}" if ok else "no upward jump found in 20 records")
    report(capsys, "8 upward jump on detection", ok, detail)
    assert ok


def _vacuum_scenario(scheme):
    sys = SystemOperators(np.eye(2), ref.L, ref.H)
    det = Detection(scheme, phase=ref.PHASE if scheme == "homodyne" else 0.0, method="kraus")
    return Scenario(sys, make_gaussian_wavepacket(1.0), FieldState.fock(0), ref.RHO0,
                    TimeGrid(ref.T0, ref.T0 + ref.STEPS * ref.DT, ref.DT), det, observables=())


def test_9_vacuum_regression(capsys):
    worst = {}
    for scheme, method in ref.CASES:
        outs, states = ref.read(scheme, method)
        sc = _vacuum_scenario(scheme)
        rec = TrajectoryRecord(scheme, ref.DT, ref.T0,
                               outs.astype(int) if scheme == "counting" else outs,
                               phase=sc.detection.phase)
        run = run_trajectory(sc, record=rec)
        DIAGNOSTICS.append(run.diagnostics)
        got = np.array([reduced_state(h, sc.field) for h in run.snapshots[1:]])
        worst[scheme] = float(np.max(np.abs(got - states)))
    ok = all(v <= 1e-8 for v in worst.values())
    report(capsys, "9 vacuum regression", ok,
           ", ".join(f"{s}: max entry error {v:.2e}" for s, v in worst.items()) + " (tol 1e-8)")
    assert ok
