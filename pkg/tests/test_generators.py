"""Block formulas vs the block-matrix (ladder) form, and identities between the maps."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from focktraj import FieldState, HierarchyState, NumericalError
from focktraj import generators as gen
from focktraj.system_model import BathChannel, SIGMA_MINUS, two_level_atom

from conftest import random_density, random_field, random_system

seeds = st.integers(0, 10 ** 6)


def _hermitian_hierarchy(rng, n, d=2):
    """Random hierarchy with the pairing property (not necessarily physical)."""
    X = rng.normal(size=((n + 1) * d,) * 2) + 1j * rng.normal(size=((n + 1) * d,) * 2)
    R = X @ X.conj().T
    return HierarchyState.from_block_matrix(0.0, R / np.trace(R).real, d)


def _xi(rng):
    return complex(rng.normal(), rng.normal()) * 0.6


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 3), seeds, st.booleans())
def test_generator_literal_matches_ladder(n, seed, with_bath):
    rng = np.random.default_rng(seed)
    sys = random_system(rng)
    baths = [BathChannel(SIGMA_MINUS, 0.3)] if with_bath else []
    h = _hermitian_hierarchy(rng, n)
    xi = _xi(rng)
    field = random_field(rng, n)
    ops = gen.LadderOperators(sys, n, field, baths)
    R = h.block_matrix()
    lit = gen.unconditional_generator(h, sys, xi, baths).as_state(0).block_matrix()
    assert np.allclose(ops.apply_generator(R, xi), lit, atol=1e-12)
    jl = gen.jump_update(h, sys, xi).as_state(0).block_matrix()
    assert np.allclose(ops.apply_jump(R, xi), jl, atol=1e-12)
    phi = rng.uniform(0, 2 * np.pi)
    cond, K = ops.apply_conditioning(R, xi, phi)
    hl = gen.homodyne_map(h, sys, xi, phi, field, subtract=False).as_state(0).block_matrix()
    assert np.allclose(cond, hl, atol=1e-12)
    assert K == pytest.approx(gen.expected_current(h, sys, xi, phi, field), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 3), seeds)
def test_generator_is_weighted_trace_free(n, seed):
    rng = np.random.default_rng(seed)
    sys = random_system(rng)
    h = _hermitian_hierarchy(rng, n)
    field = random_field(rng, n)
    ops = gen.LadderOperators(sys, n, field, [BathChannel(SIGMA_MINUS, 0.5)])
    out = ops.apply_generator(h.block_matrix(), _xi(rng))
    assert abs(ops.wtrace(out)) < 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 3), seeds, st.floats(1e-5, 1e-2))
def test_no_jump_plus_jump_is_euler_step(n, seed, dt):
    rng = np.random.default_rng(seed)
    sys = random_system(rng)
    h = _hermitian_hierarchy(rng, n)
    xi = _xi(rng)
    nj = gen.no_jump_update(h, sys, xi, dt).full_blocks
    j = gen.jump_update(h, sys, xi).full_blocks
    K = gen.unconditional_generator(h, sys, xi).full_blocks
    assert np.allclose(nj + dt * j, h.full() + dt * K, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 3), seeds)
def test_jump_probability_is_weighted_trace_of_jump(n, seed):
    rng = np.random.default_rng(seed)
    sys = random_system(rng, scale=0.2)
    h = _hermitian_hierarchy(rng, n)
    field = random_field(rng, n)
    xi = _xi(rng) * 0.3
    dt = 1e-3
    ops = gen.LadderOperators(sys, n, field)
    direct = dt * ops.wtrace(gen.jump_update(h, sys, xi).as_state(0).block_matrix())
    p = gen.jump_probability(h, sys, xi, field, dt)
    assert p == pytest.approx(min(max(direct, 0), 1), abs=1e-13)
    assert ops.jump_probability(h.block_matrix(), xi, dt) == pytest.approx(direct, abs=1e-13)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 3), seeds)
def test_maps_preserve_pairing(n, seed):
    rng = np.random.default_rng(seed)
    sys = random_system(rng)
    h = _hermitian_hierarchy(rng, n)
    xi = _xi(rng)
    for F in (gen.unconditional_generator(h, sys, xi).full_blocks,
              gen.jump_update(h, sys, xi).full_blocks,
              gen.homodyne_map(h, sys, xi, 0.4, random_field(rng, n)).full_blocks):
        assert np.allclose(F, np.conj(np.swapaxes(np.swapaxes(F, 0, 1), -1, -2)), atol=1e-12)


def test_vacuum_level_is_lindblad():
    rng = np.random.default_rng(0)
    sys = random_system(rng)
    rho = random_density(rng)
    h = HierarchyState(0.0, 0, rho[None])
    K = gen.unconditional_generator(h, sys, 0.7 + 0.2j).full_blocks[0, 0]
    H, L = sys.hamiltonian, sys.coupling
    assert np.allclose(K, -1j * (H @ rho - rho @ H) + gen.lindblad(L, rho))


def test_single_photon_jump_probability_example():
    # ground-state atom, N = 1: Pr(J) = |xi|^2 dt (only the free field can click)
    sys = two_level_atom(1.0)
    from focktraj import init_hierarchy
    h = init_hierarchy(np.diag([1, 0]), 1)
    xi = 0.5
    p = gen.jump_probability(h, sys, xi, FieldState.fock(1), 1e-3)
    assert p == pytest.approx(0.25e-3, rel=1e-12)
    # excited atom, vacuum input: Pr(J) = Gamma dt
    h0 = init_hierarchy(np.diag([0, 1]), 0)
    assert gen.jump_probability(h0, sys, xi, FieldState.fock(0), 1e-3) == pytest.approx(1e-3)


def test_homodyne_current_example():
    # atom in |+>, vacuum input, phase 0: K = <L + L^dag> = sqrt(Gamma) <sigma_x> = 1
    from focktraj import init_hierarchy
    plus = np.full((2, 2), 0.5)
    h = init_hierarchy(plus, 0)
    K = gen.expected_current(h, two_level_atom(1.0), 0.0, 0.0, FieldState.fock(0))
    assert K == pytest.approx(1.0)


def test_probability_clamp_and_errors():
    assert gen.clamp_probability(-1e-13) == 0.0
    assert gen.clamp_probability(1 + 1e-13) == 1.0
    with pytest.raises(NumericalError):
        gen.clamp_probability(-1e-6)
    with pytest.raises(NumericalError):
        gen.real_checked(1 + 1e-3j)
