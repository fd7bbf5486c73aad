import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from focktraj import ResolutionError, SystemOperators, two_level_atom
from focktraj import binmodel

from conftest import random_system


def test_trivial_system_gives_identity():
    sys = SystemOperators(np.eye(2), np.zeros((2, 2)), np.zeros((2, 2)))
    assert np.allclose(binmodel.bin_unitary(sys, 1e-3), np.eye(4), atol=1e-15)


def test_atom_unitary_to_machine_precision():
    U = binmodel.bin_unitary(two_level_atom(1.0), 1e-3)
    assert np.max(np.abs(U.conj().T @ U - np.eye(4))) < 1e-12


def _gaps(sys, dt):
    A = binmodel.first_order_bin_propagator(sys, dt)
    D = (binmodel.bin_unitary(sys, dt) - A).reshape(2, 2, 2, 2)   # (s, b, s', b')
    return np.linalg.norm(D[:, :, :, 0]), np.linalg.norm(D[:, :, :, 1])


def test_polar_correction_orders():
    # one-photon column: A^dag A - I = dt (S^dag L L^dag S - L^dag L) (x) |1><1|, an O(dt)
    # defect, so the correction there is O(dt); it leaks into the vacuum-input column
    # through the sqrt(dt) couplings, giving O(dt^1.5) there
    sys = two_level_atom(1.0)
    (v1, o1), (v2, o2) = _gaps(sys, 2e-3), _gaps(sys, 1e-3)
    assert 2.6 < v1 / v2 < 3.1
    assert 1.8 < o1 / o2 < 2.2
    A = binmodel.first_order_bin_propagator(sys, 1e-3).reshape(2, 2, 2, 2)
    defect = np.einsum("abk,abl->kl", A[:, :, :, 1].conj(), A[:, :, :, 1]) - np.eye(2)
    L = sys.coupling
    assert np.allclose(defect, 1e-3 * (L @ L.conj().T - L.conj().T @ L), atol=2e-6)  # + O(dt^2)


def test_distance_from_identity_vanishes_with_dt():
    sys = SystemOperators(np.eye(2), np.zeros((2, 2)), np.diag([0.0, 1.0]))
    d1 = np.linalg.norm(binmodel.bin_unitary(sys, 2e-3) - np.eye(4))
    d2 = np.linalg.norm(binmodel.bin_unitary(sys, 1e-3) - np.eye(4))
    assert d1 / d2 == pytest.approx(2.0, rel=1e-3)


def test_coarse_bins_rejected():
    with pytest.raises(ResolutionError):
        binmodel.bin_unitary(two_level_atom(1.0), 0.02)
    with pytest.raises(ResolutionError):
        binmodel.bin_unitary(two_level_atom(1.0), 0.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 6), st.floats(1e-5, 5e-3))
def test_random_systems_unitary(seed, dt):
    sys = random_system(np.random.default_rng(seed), scale=0.5)
    if dt * sys.decay_norm > 0.01:
        dt = 0.01 / sys.decay_norm
    U = binmodel.bin_unitary(sys, dt)
    assert np.allclose(U.conj().T @ U, np.eye(2 * sys.dim), atol=1e-12)


@pytest.mark.parametrize("eta", [0.0, 0.3, 1.0])
def test_instruments_complete(eta):
    assert binmodel.is_complete(binmodel.counting_instrument(eta))
    assert binmodel.is_complete(binmodel.homodyne_instrument(0.7, eta))
    assert binmodel.is_complete(binmodel.heterodyne_instrument(eta))


def test_heterodyne_states_carry_weight_half_over_sqrt2():
    rows = binmodel.heterodyne_instrument(1.0)
    for (s, r), (row, _lost) in rows.items():
        assert row[0] == pytest.approx(0.5)
        assert row[1] == pytest.approx(0.5 * (s - 1j * r) / math.sqrt(2))
