import sys
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import unitary_group

sys.path.insert(0, str(Path(__file__).parent))

from focktraj import FieldState, SystemOperators, make_gaussian_wavepacket, two_level_atom  # noqa: E402


def random_system(rng, dim=2, scale=0.7):
    A = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    L = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    S = unitary_group.rvs(dim, random_state=rng)
    return SystemOperators(S, scale * L, (A + A.conj().T) / 2)


def random_density(rng, dim=2, rank=None):
    rank = rank or dim
    X = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = X @ X.conj().T
    return rho / np.trace(rho).real


def random_field(rng, n):
    """Random valid field coefficient matrix with at most n photons."""
    return FieldState(n, random_density(rng, n + 1))


@pytest.fixture
def atom():
    return two_level_atom(1.0)


@pytest.fixture(scope="session")
def packet():
    return make_gaussian_wavepacket(1.0)


GROUND = np.diag([1.0, 0.0]).astype(complex)
EXCITED = np.diag([0.0, 1.0]).astype(complex)
