import numpy as np
import pytest

from focktraj import FieldState, ValidationError, init_hierarchy, two_level_atom
from focktraj import observables as obs
from focktraj.generators import LadderOperators
from focktraj.system_model import PROJ_E, SIGMA_X, SIGMA_Z, SystemOperators

from conftest import EXCITED, GROUND


def test_expectation_basics():
    h = init_hierarchy(EXCITED, 1)
    f = FieldState.fock(1)
    assert obs.expectation(h, f, np.eye(2)) == pytest.approx(1.0)
    assert obs.expectation(h, f, SIGMA_Z) == pytest.approx(1.0)
    with pytest.raises(ValidationError):
        obs.expectation(h, f, np.array([[0, 1], [0, 0]]))
    with pytest.raises(ValidationError):
        obs.expectation(h, f, np.eye(3))


def test_purity_limits():
    f = FieldState.fock(0)
    assert obs.purity(init_hierarchy(EXCITED, 0), f) == pytest.approx(1.0)
    assert obs.purity(init_hierarchy(np.eye(2) / 2, 0), f) == pytest.approx(0.5)


def test_bloch_vector_only_for_qubits():
    plus = np.full((2, 2), 0.5)
    assert np.allclose(obs.bloch_vector(init_hierarchy(plus, 0), FieldState.fock(0)), [1, 0, 0])
    with pytest.raises(ValidationError):
        obs.bloch_vector(init_hierarchy(np.eye(3) / 3, 0), FieldState.fock(0))
    sys3 = SystemOperators(np.eye(3), np.zeros((3, 3)), np.zeros((3, 3)))
    with pytest.raises(ValidationError):
        obs.SeriesEvaluator(["bloch_x"], LadderOperators(sys3, 0, FieldState.fock(0)))


def test_photon_flux_examples():
    atom = two_level_atom(1.0)
    assert obs.conditional_photon_flux(init_hierarchy(GROUND, 1), atom, 0.0, FieldState.fock(1)) == 0
    assert obs.conditional_photon_flux(init_hierarchy(EXCITED, 0), atom, 0.3,
                                       FieldState.fock(0)) == pytest.approx(1.0)
    # free single-photon flux |xi|^2 onto a ground-state atom
    assert obs.conditional_photon_flux(init_hierarchy(GROUND, 1), atom, 0.4,
                                       FieldState.fock(1)) == pytest.approx(0.16)


def test_quadrature_examples():
    atom = two_level_atom(1.0)
    f1 = FieldState.fock(1)
    assert obs.conditional_quadrature(init_hierarchy(GROUND, 1), atom, 0.0, f1, 0.0) == 0
    h = init_hierarchy(np.array([[0.5, 0.3 - 0.2j], [0.3 + 0.2j, 0.5]]), 0)
    f0 = FieldState.fock(0)
    a = obs.conditional_quadrature(h, atom, 0.0, f0, 0.4)
    b = obs.conditional_quadrature(h, atom, 0.0, f0, 0.4 + np.pi)
    assert a == pytest.approx(-b) and abs(a) > 0.1


def test_series_evaluator_adds_standard_columns():
    ops = LadderOperators(two_level_atom(1.0), 1, FieldState.fock(1))
    ev = obs.SeriesEvaluator(["bloch_z", "mine"], ops, matrices={"mine": PROJ_E})
    assert ev.names == ["bloch_z", "mine", "trace", "purity", "cumulative_counts"]
    R = init_hierarchy(EXCITED, 1).block_matrix()[None]
    out = ev(R, 0.0, np.array([3]))
    assert out["bloch_z"][0] == pytest.approx(1) and out["mine"][0] == pytest.approx(1)
    assert out["cumulative_counts"][0] == 3 and out["trace"][0] == pytest.approx(1)
    with pytest.raises(ValidationError):
        obs.SeriesEvaluator(["no_such_thing"], ops)
    with pytest.raises(ValidationError):
        obs.SeriesEvaluator(["x"], ops, matrices={"x": SIGMA_X[:1]})
