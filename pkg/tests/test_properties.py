"""Flat-part experiments, structural table checks and discrete comparison."""
from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coupledhj.cell import EffectiveTable, upper_certificate
from coupledhj.grid import CouplingMatrix, TorusGrid
from coupledhj.hamiltonians import HamiltonianSpec
from coupledhj.properties import (EXPERIMENTS, FlatExperiment, HypothesisError, coercivity_check, collapse_check,
                                  comparison_trials, convexity_check, homogeneity_check, max_comparison_check,
                                  run_elementary_checks, run_flat_experiment, thm48, thm410)


def table_of(axes, H, err=0.0):
    H = np.asarray(H, dtype=float)
    e = np.full_like(H, err)
    z = np.zeros_like(H)
    return EffectiveTable([np.asarray(a, dtype=float) for a in axes], H, e, z, z, 0.02, 64)


P1 = np.linspace(-2, 2, 9)


# synthetic tables -----------------------------------------------------------

@settings(max_examples=30)
@given(st.floats(0.1, 3.0), st.floats(-1, 1))
def test_convex_tables_pass_convexity(a, b):
    assert convexity_check(table_of([P1], a * P1**2 + b * P1)).passed


def test_concave_bump_fails_convexity():
    H = np.abs(P1)
    H[4] = 1.0
    assert not convexity_check(table_of([P1], H)).passed
    # the same bump is tolerated with a large error bar
    assert convexity_check(table_of([P1], H, err=0.3)).passed


def test_convexity_in_2d_uses_diagonals():
    x, y = np.meshgrid(P1, P1, indexing="ij")
    assert convexity_check(table_of([P1, P1], np.hypot(x, y))).passed
    assert not convexity_check(table_of([P1, P1], -np.abs(x - y))).passed


def test_homogeneity_check():
    assert homogeneity_check(table_of([P1], 1.3 * np.abs(P1))).passed
    rep = homogeneity_check(table_of([P1], P1**2))
    assert not rep.passed and rep.detail["pairs"] > 0


def test_coercivity_check():
    assert coercivity_check(table_of([P1], P1**2)).passed
    assert not coercivity_check(table_of([P1], -(P1**2))).passed


def test_collapse_and_max_checks():
    t = table_of([P1], P1**2)
    assert collapse_check(t, table_of([P1], P1**2)).passed
    assert not collapse_check(t, table_of([P1], P1**2 + 1e-9)).passed
    assert max_comparison_check(t, table_of([P1], P1**2 + 0.01)).passed
    assert not max_comparison_check(t, table_of([P1], P1**2 - 0.1)).passed


def test_elementary_checks_gate_on_family():
    quartic = HamiltonianSpec.from_config([{"family": "quartic"}, {"family": "quartic"}])
    rep = run_elementary_checks(table_of([P1], (P1**2 - 1) ** 2), quartic)
    assert rep.entry("midpoint_convexity").skipped
    assert rep.entry("degree_one_homogeneity").skipped
    assert rep.entry("equal_hamiltonian_collapse").skipped


# flat-part experiments ------------------------------------------------------

@pytest.mark.parametrize("name", sorted(EXPERIMENTS))
def test_experiment_hypotheses_hold(name):
    exp = EXPERIMENTS[name]()
    assert all(exp.audit().values()), exp.audit()


def test_broken_construction_is_rejected_before_solving():
    exp = thm410()
    bad = FlatExperiment(exp.name, [-1.0, -1.0], 1, "flat", [[0.0]], 0.03, 64,
                         exp.hypotheses, expect_lower_zero=True)
    with pytest.raises(HypothesisError):
        run_flat_experiment(bad)


def test_flat_subsolution_certificate():
    # (phi, phi) with phi = P psi is a subsolution of the cell problem at level 0 below gamma
    exp = thm48()
    spec, K = exp.spec(), exp.coupling
    g = TorusGrid(1, 2048)
    gamma = exp.gamma_formula
    assert 0.1 < gamma < 1.0
    for s in (-0.99, -0.5, 0.5, 0.99):
        P = np.array([s * gamma])
        assert upper_certificate(spec, K, P, exp.subsolution(P, g), g) <= 1e-12
    P = np.array([1.5 * gamma])
    assert upper_certificate(spec, K, P, exp.subsolution(P, g), g) > 0


def test_thm410_flat_at_small_P():
    rep = run_flat_experiment(thm410(), grid_N=256)
    assert rep.passed
    assert all(abs(r.lower_cert) <= 1e-12 for r in rep.rows)


# comparison -----------------------------------------------------------------

def test_comparison_trials_small():
    spec = HamiltonianSpec.from_config([{"family": "quadratic", "a": 1.0, "V": 0.0},
                                        {"family": "abs", "a": {"name": "explicit_speed"}, "V": 0.0}])
    rep = comparison_trials(spec, CouplingMatrix.symmetric(2), 0.25, TorusGrid(1, 64), 0.05, n_trials=5)
    assert rep.passed and rep.worst_gap <= 0.0
