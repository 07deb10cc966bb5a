"""Grids, fields, Hamiltonian registry, numerical fluxes and the matrix exponential."""
from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm as scipy_expm

from coupledhj.expm import coupling_propagator, expm, two_state_propagator
from coupledhj.fields import explicit_correctors, explicit_speed, make_field, plateau
from coupledhj.grid import CouplingMatrix, StateField, TorusGrid
from coupledhj.hamiltonians import INF_SENTINEL, Component, HamiltonianSpec, profile
from coupledhj.numerics import (BoundaryAttainmentError, legendre_transform, numerical_hamiltonian, one_sided,
                                upwind_gradients)

finite = st.floats(-5.0, 5.0, allow_nan=False)


def quad_spec(V2=None, a=1.0):
    return HamiltonianSpec.from_config([{"family": "quadratic", "a": a, "V": 0.0},
                                        {"family": "quadratic", "a": a, "V": V2 if V2 is not None else 0.0}])


# grid -----------------------------------------------------------------------

def test_torus_grid_rejects_bad_sizes():
    with pytest.raises(ValueError):
        TorusGrid(3, 16)
    with pytest.raises(ValueError):
        TorusGrid(1, 4)


def test_torus_grid_geometry():
    g = TorusGrid(2, 16)
    assert g.shape == (16, 16) and g.size == 256 and g.h == 1 / 16
    assert g.mesh().shape == (2, 16, 16)
    assert g.neighbor((0, 15), 1, 1) == (0, 0)
    assert g.neighbor((0, 3), 0, -1) == (15, 3)


def test_coupling_matrix_validation():
    with pytest.raises(ValueError):
        CouplingMatrix(np.array([[0.5, 0.6], [1.0, 0.0]]))
    with pytest.raises(ValueError):
        CouplingMatrix(np.array([[1.5, -0.5], [1.0, 0.0]]))
    with pytest.raises(ValueError):
        CouplingMatrix.from_rates(0.0, 1.0)


def test_perron_vector_two_state():
    K = CouplingMatrix.from_rates(0.5, 1.0)
    pi = K.perron_left()
    assert np.allclose(pi @ K.matrix, pi)
    assert np.allclose(pi, [2 / 3, 1 / 3])


@given(st.integers(2, 6))
def test_symmetric_coupling_is_doubly_stochastic(m):
    K = CouplingMatrix.symmetric(m)
    assert K.is_doubly_stochastic()
    assert np.allclose(K.perron_left(), 1 / m)


def test_state_field_shape_checked():
    g = TorusGrid(1, 8)
    with pytest.raises(ValueError):
        StateField(g, np.zeros((2, 9)), 0.0)


# fields ---------------------------------------------------------------------

def test_explicit_correctors_solve_cell_pair():
    # closed-form correctors satisfy the cell pair at P = 1 with H_bar = 1
    x = np.linspace(0, 1, 4001)[:-1]
    v1, v2 = explicit_correctors(x)
    h = x[1] - x[0]
    d1 = (np.roll(v1, -1) - np.roll(v1, 1)) / (2 * h)
    d2 = (np.roll(v2, -1) - np.roll(v2, 1)) / (2 * h)
    a = explicit_speed(x)
    r1 = np.abs(1 + d1) + v1 - v2 - 1
    r2 = a * np.abs(1 + d2) + v2 - v1 - 1
    assert np.max(np.abs(r1)) < 1e-5
    assert np.max(np.abs(r2)) < 1e-5


def test_plateau_values():
    x = np.linspace(0, 1, 1001)
    f = plateau(x, (0.4, 0.6), (0.3, 0.7))
    assert np.all(f[(x >= 0.4) & (x <= 0.6)] == 1)
    assert np.all(f[(x <= 0.3) | (x >= 0.7)] == 0)
    assert np.all((f >= 0) & (f <= 1))


def test_make_field_families():
    xi = np.linspace(0, 1, 9)[None]
    assert np.allclose(make_field(2.5)(xi), 2.5)
    s = make_field({"name": "trig", "center": 0.25})
    assert np.allclose(s(xi), np.sin(2 * np.pi * xi[0]))
    w = make_field({"name": "cosine_well", "center": 0.5})
    assert w(np.array([[0.5]]))[0] == 0.0
    t = make_field({"name": "tabulated", "values": [0.0, 1.0, 0.0, -1.0]})
    assert np.isclose(t(np.array([[0.125]]))[0], 0.5)
    with pytest.raises(ValueError):
        make_field({"name": "nope"})
    with pytest.raises(ValueError):
        make_field({"name": "trig", "bogus": 1})


@given(st.floats(-3, 3), st.integers(1, 4))
def test_fields_are_periodic(x, k):
    f = make_field({"name": "trig", "k": k, "center": 0.1})
    assert np.isclose(f(np.array([[x]]))[0], f(np.array([[x + 1.0]]))[0], atol=1e-12)


# hamiltonians ---------------------------------------------------------------

def test_profiles():
    r = np.array([0.0, 0.5, 2.0])
    assert np.allclose(profile("abs", r), r)
    assert np.allclose(profile("quartic", r), (r**2 - 1) ** 2)
    with pytest.raises(ValueError):
        profile("cubic", r)


def test_spec_properties():
    spec = HamiltonianSpec.from_config([{"family": "quartic"}, {"family": "quartic"}])
    assert spec.convex_in_p == (False, False)
    assert not spec.all_convex
    assert spec.eval(0, np.array([[0.3]]), np.array([[0.0]]))[0] == 1.0
    with pytest.raises(ValueError):
        Component.build("cubic")


@settings(max_examples=40)
@given(st.floats(0.2, 3.0), st.floats(-2.0, 2.0), st.floats(-1.5, 1.5))
def test_quadratic_lagrangian_matches_lattice_transform(a, V, q):
    spec = HamiltonianSpec.from_config([{"family": "quadratic", "a": a, "V": V}])
    xi = np.array([0.3])
    closed = spec.components[0].lagrangian(xi[:, None], np.array([[q]]))[0]
    radius = abs(q) / (2 * a) + 2.0
    lattice = legendre_transform(spec, 0, xi, [q], radius, n_lattice=20001)[0]
    assert abs(closed - lattice) <= 1e-4 * (1 + abs(closed))


def test_abs_lagrangian_is_indicator():
    spec = HamiltonianSpec.from_config([{"family": "abs", "a": 2.0, "V": 0.5}])
    L = spec.components[0].lagrangian(np.zeros((1, 3)), np.array([[0.0, 1.9, 2.5]]))
    assert L[0] == 0.5 and L[1] == 0.5 and L[2] == INF_SENTINEL
    lat = legendre_transform(spec, 0, [0.0], [1.0, 3.0], 40.0, cap=20.0)
    assert np.isclose(lat[0], 0.5, atol=1e-9) and lat[1] == INF_SENTINEL
    with pytest.raises(BoundaryAttainmentError):
        legendre_transform(spec, 0, [0.0], [3.0], 4.0)


def test_legendre_boundary_attainment_raises():
    spec = quad_spec()
    with pytest.raises(BoundaryAttainmentError):
        legendre_transform(spec, 0, [0.0], [10.0], 1.0)


def test_legendre_rejects_nonconvex():
    spec = HamiltonianSpec.from_config([{"family": "quartic"}])
    with pytest.raises(ValueError):
        legendre_transform(spec, 0, [0.0], [0.0], 2.0)


# numerical Hamiltonian ------------------------------------------------------

@settings(max_examples=60)
@given(finite, finite, finite)
def test_lax_friedrichs_is_monotone(pm, pp, bump):
    # nonincreasing in p+ and nondecreasing in p- when theta >= Lip_p on the range
    spec = quad_spec()
    theta = 2 * 10.5
    xi = 0.2
    d = abs(bump) * 0.1
    base = numerical_hamiltonian(spec, 0, xi, pm, pp, theta)
    assert numerical_hamiltonian(spec, 0, xi, pm + d, pp, theta) >= base - 1e-12
    assert numerical_hamiltonian(spec, 0, xi, pm, pp + d, theta) <= base + 1e-12


@given(finite)
def test_numerical_hamiltonian_consistent(p):
    spec = quad_spec()
    assert np.isclose(numerical_hamiltonian(spec, 0, 0.1, p, p, 3.0), p * p)


def test_numerical_hamiltonian_rejects_nonfinite():
    with pytest.raises(ValueError):
        numerical_hamiltonian(quad_spec(), 0, 0.0, np.nan, 0.0, 1.0)


def test_upwind_gradients_and_one_sided():
    g = TorusGrid(1, 8)
    u = np.stack([np.arange(8.0), np.zeros(8)])
    pm, pp = upwind_gradients(StateField(g, u, 0.0), 0, 0)
    assert pm[0] == (0 - 7) * 8 and pp[0] == 8
    dm, dp = one_sided(u[0], g.h)
    assert dm[0, 3] == 8 and dp[0, 7] == -56
    with pytest.raises(IndexError):
        upwind_gradients(StateField(g, u, 0.0), 0, 8)


# matrix exponential ---------------------------------------------------------

@settings(max_examples=50)
@given(st.integers(2, 8), st.integers(0, 10_000), st.floats(1e-3, 50.0))
def test_expm_matches_scipy(m, seed, scale):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(m, m)) * scale / m
    assert np.allclose(expm(A), scipy_expm(A), rtol=1e-10, atol=1e-12 * np.linalg.norm(scipy_expm(A)))


@given(st.floats(0.01, 1.0), st.floats(0.01, 1.0), st.floats(0.0, 100.0))
def test_two_state_closed_form(c1, c2, s):
    K = np.array([[1 - c1, c1], [c2, 1 - c2]])
    assert np.allclose(two_state_propagator(c1, c2, s), scipy_expm(s * (K - np.eye(2))), atol=1e-12)


def test_propagator_is_stochastic():
    K = CouplingMatrix.symmetric(3).matrix
    E = coupling_propagator(K, 0.01, 0.05)
    assert np.allclose(E.sum(axis=1), 1) and np.all(E >= 0)


def test_expm_rejects_large_or_nonsquare():
    with pytest.raises(ValueError):
        expm(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        expm(np.zeros((9, 9)))
