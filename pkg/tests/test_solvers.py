"""Coupled evolution, cell problem, effective evolution and Dirichlet solvers against closed forms."""
from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coupledhj.cell import (EffectiveTable, NonConvergenceError, build_table, coercive_lower_bound, effective_at,
                            lower_bound, solve_cell_discounted, upper_certificate)
from coupledhj.dirichlet import (DirichletProblem, effective_datum, solve_dirichlet_effective,
                                 solve_dirichlet_eps)
from coupledhj.effective import EffectiveProblem, grid_rule, inner_solution, matched_solutions, solve_effective
from coupledhj.evolution import (CFLError, EpsSystemProblem, build_barriers, check_periodic_scale, check_sandwich,
                                 evolve, step)
from coupledhj.grid import CouplingMatrix, StateField, TorusGrid
from coupledhj.hamiltonians import HamiltonianSpec

K2 = CouplingMatrix.symmetric(2)


def spec_of(*entries, dim=1):
    return HamiltonianSpec.from_config(list(entries), dim)


ABS = {"family": "abs", "a": 1.0, "V": 0.0}
QUAD = {"family": "quadratic", "a": 1.0, "V": 0.0}


def table_of(P, H):
    P = np.asarray(P, dtype=float)
    H = np.asarray(H, dtype=float)
    z = np.zeros_like(H)
    return EffectiveTable([P], H, z, z, z, 0.02, 64)


# coupled evolution ----------------------------------------------------------

def hopf_abs(f, x, t, n=20001):
    # u_t + |u_x| = 0: u(x, t) = min over |y - x| <= t of f(y)
    y = x[:, None] + np.linspace(-t, t, n)[None, :]
    return f(y).min(axis=1)


def test_evolution_matches_hopf_formula_for_abs():
    f = lambda x: np.sin(2 * np.pi * x)
    spec = spec_of(ABS, ABS)
    errs = []
    for N in (200, 800):
        g = TorusGrid(1, N)
        x = g.axis()
        prob = EpsSystemProblem(spec, K2, 1.0, g, np.stack([f(x), f(x)]), 0.2)
        u = evolve(prob, [0.2])[0].values
        errs.append(float(np.max(np.abs(u - hopf_abs(f, x, 0.2)[None]))))
    assert errs[1] < errs[0]
    assert errs[1] < 0.02


def test_step_rejects_cfl_violation():
    g = TorusGrid(1, 64)
    x = g.axis()
    prob = EpsSystemProblem(spec_of(QUAD, QUAD), K2, 0.5, g, np.stack([np.sin(2 * np.pi * x)] * 2), 0.1)
    with pytest.raises(CFLError) as exc:
        step(prob, prob.initial_state(), 2 * prob.dt_max)
    assert exc.value.dt_max == pytest.approx(prob.dt_max)


def test_periodic_scale_required():
    check_periodic_scale(0.05)
    with pytest.raises(ValueError):
        check_periodic_scale(0.3)


def test_pure_coupling_decays_exactly():
    # zero Hamiltonians: u(t) = exp(t (K - I)/eps) f, so the gap decays as exp(-2t/eps)
    g = TorusGrid(1, 32)
    f = np.stack([np.ones(32), np.zeros(32)])
    spec = spec_of({"family": "zero"}, {"family": "zero"})
    prob = EpsSystemProblem(spec, K2, 0.1, g, f, 0.3)
    u = evolve(prob, [0.3])[0].values
    assert np.allclose(u[0] - u[1], np.exp(-2 * 0.3 / 0.1), atol=1e-13)
    assert np.allclose(u.mean(axis=0), 0.5, atol=1e-13)


@settings(max_examples=15, deadline=None)
@given(st.floats(-1, 1), st.floats(-1, 1), st.integers(0, 1000))
def test_discrete_comparison_random_ordered_data(c1, c2, seed):
    rng = np.random.default_rng(seed)
    g = TorusGrid(1, 32)
    x = g.axis()
    base = np.stack([c1 * np.sin(2 * np.pi * x), c2 * np.cos(2 * np.pi * x)])
    lift = np.abs(rng.normal(size=base.shape)) * 0.1
    spec = spec_of(QUAD, {"family": "quadratic", "a": 1.0, "V": {"name": "cosine_well"}})
    lo = evolve(EpsSystemProblem(spec, K2, 0.5, g, base, 0.05, R_grad=20.0), [0.05])[0].values
    hi = evolve(EpsSystemProblem(spec, K2, 0.5, g, base + lift, 0.05, R_grad=20.0), [0.05])[0].values
    assert np.all(lo <= hi + 1e-12)


def test_barrier_sandwich_holds_and_detects_small_constant():
    g = TorusGrid(1, 64)
    x = g.axis()
    spec = spec_of(QUAD, {"family": "quadratic", "a": 1.0, "V": {"name": "cosine_well"}})
    prob = EpsSystemProblem(spec, K2, 0.25, g, np.stack([np.sin(2 * np.pi * x), np.zeros(64)]), 0.2)
    times = [0.0, 0.05, 0.1, 0.2]
    run = evolve(prob, times)
    assert check_sandwich(prob, run, build_barriers(prob, times), 5 * g.h).passed
    assert not check_sandwich(prob, run, build_barriers(prob, times, C=0.0), 0.0).passed


def test_evolve_sample_times_do_not_change_trajectory():
    g = TorusGrid(1, 64)
    x = g.axis()
    prob = EpsSystemProblem(spec_of(QUAD, QUAD), K2, 0.5, g, np.stack([np.sin(2 * np.pi * x)] * 2), 0.1)
    a = evolve(prob, [0.1])[0].values
    b = evolve(prob, [0.0137, 0.05, 0.1])[-1].values
    assert np.array_equal(a, b)


def test_evolve_rejects_unordered_times():
    g = TorusGrid(1, 16)
    prob = EpsSystemProblem(spec_of(QUAD, QUAD), K2, 0.5, g, np.zeros((2, 16)), 0.1)
    with pytest.raises(ValueError):
        evolve(prob, [0.05, 0.01])


# cell problem ---------------------------------------------------------------

@pytest.mark.parametrize("P", [0.0, 0.5, 1.0])
def test_cell_constant_coefficients_give_exact_value(P):
    est = effective_at(spec_of(QUAD, QUAD), K2, P, grid=TorusGrid(1, 64))
    assert abs(est.H_bar - P * P) <= 1e-4
    lo, hi = est.finest.bracket
    assert lo - 1e-9 <= -est.finest.delta * est.finest.values.mean() <= hi + 1e-9


def test_cell_lower_bound_and_certificate():
    spec = spec_of({"family": "quadratic", "a": 1.0, "V": {"name": "cosine_well"}}, QUAD)
    assert coercive_lower_bound(spec, 0.0) == pytest.approx(-2.0, abs=1e-9)
    assert lower_bound(spec, 0.0, K2) == pytest.approx(0.0, abs=1e-9)
    g = TorusGrid(1, 64)
    # constant pair: max_i max_xi H_i(xi, P)
    assert upper_certificate(spec, K2, 1.0, np.zeros((2, 64)), g) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        upper_certificate(spec, K2, 1.0, np.zeros((2, 64)), g, scheme="flux")


def test_cell_rejects_coarse_grid_and_reports_nonconvergence():
    spec = spec_of(QUAD, QUAD)
    with pytest.raises(ValueError):
        effective_at(spec, K2, 0.5, grid=TorusGrid(1, 16))
    with pytest.raises(NonConvergenceError):
        solve_cell_discounted(spec_of(QUAD, {"family": "quadratic", "a": 1.0, "V": {"name": "cosine_well"}}),
                              K2, 0.5, 0.02, 1e-14, TorusGrid(1, 64), max_steps=100, check_every=50)


def test_build_table_records_points():
    spec = spec_of(QUAD, QUAD)
    t = build_table(spec, K2, [[-1.0, 0.0, 1.0]], grid=TorusGrid(1, 64))
    assert np.allclose(t.H_bar, [1, 0, 1], atol=1e-4)
    assert not t.failures
    H, clamped = t.interpolate(np.array([[0.5, 3.0]]))
    assert H[0] == pytest.approx(0.5, abs=1e-4) and clamped == 1


def test_table_csv_round_trip(tmp_path):
    t = table_of([-1.0, 0.0, 1.0], [1.0, 0.0, 1.0])
    t.to_csv(tmp_path / "t.csv")
    back = EffectiveTable.from_csv(tmp_path / "t.csv")
    assert np.array_equal(back.H_bar, t.H_bar)
    assert np.array_equal(back.axes[0], t.axes[0])


# effective evolution and matched functions ----------------------------------

def test_effective_solver_matches_hopf_lax_for_quadratic():
    # H_bar = P^2 from a table; Hopf-Lax u(x,t) = min_y f(y) + (x-y)^2/(4t)
    P = np.linspace(-8, 8, 641)
    table = table_of(P, P**2)
    g = TorusGrid(1, 256)
    x = g.axis()
    f = lambda y: np.sin(2 * np.pi * y)
    u = solve_effective(EffectiveProblem(table, f(x), g, 0.05), [0.05])[0].values[0]
    y = np.linspace(-1, 2, 30001)
    exact = np.min(f(y)[None] + (x[:, None] - y[None]) ** 2 / (4 * 0.05), axis=1)
    assert np.max(np.abs(u - exact)) < 0.03


def test_effective_problem_validates_shapes():
    with pytest.raises(ValueError):
        EffectiveProblem(table_of([0.0, 1.0], [0.0, 1.0]), np.zeros(10), TorusGrid(1, 16), 0.1)


def test_inner_and_matched_solutions():
    f1, f2 = np.array([1.0]), np.array([0.0])
    a, b = inner_solution(f1, f2, 0.0)
    assert a[0] == 1.0 and b[0] == 0.0
    a, b = inner_solution(f1, f2, 50.0)
    assert a[0] == pytest.approx(0.5) and b[0] == pytest.approx(0.5)
    g = TorusGrid(1, 8)
    f = np.stack([np.ones(8), np.zeros(8)])
    outer = [StateField(g, np.full((1, 8), 0.5), t) for t in (0.0, 0.1)]
    m = matched_solutions(outer, f, 0.05)
    assert np.allclose(m.values[0], f)
    assert np.allclose(m.values[1][0] - m.values[1][1], np.exp(-2 * 0.1 / 0.05))


def test_grid_rule():
    assert grid_rule(0.05, 32) == 640
    with pytest.raises(ValueError):
        grid_rule(0.3, 32)


# Dirichlet ------------------------------------------------------------------

def distance_solution(x):
    # u + |u'| - 1 = 0 on (0, 1), u = 0 at both ends
    return 1.0 - np.exp(-np.minimum(x, 1.0 - x))


def test_dirichlet_eps_matches_closed_form():
    spec = spec_of({"family": "abs", "a": 1.0, "V": 1.0}, {"family": "abs", "a": 1.0, "V": 1.0})
    errs = []
    for N in (100, 400):
        sol = solve_dirichlet_eps(DirichletProblem(spec, K2, 0.5, 0.0, 1.0, N, [0, 0], [0, 0]))
        errs.append(float(np.max(np.abs(sol.values - distance_solution(sol.x)[None]))))
        assert sol.boundary_attained([0, 0], [0, 0]).all()
    assert errs[1] < errs[0] and errs[1] < 0.02


def test_dirichlet_effective_matches_closed_form():
    P = np.linspace(-4, 4, 161)
    sol = solve_dirichlet_effective(table_of(P, np.abs(P) - 1.0), 0.0, 1.0, 400, 0.0, 0.0)
    assert np.max(np.abs(sol.values[0] - distance_solution(sol.x))) < 0.02


def test_dirichlet_effective_datum_and_validation():
    assert effective_datum([1.0, 0.0]) == 0.0
    spec = spec_of(ABS, ABS)
    with pytest.raises(ValueError):
        DirichletProblem(spec, K2, 0.1, 1.0, 0.0, 10, [0, 0], [0, 0])
    with pytest.raises(ValueError):
        DirichletProblem(spec, K2, 0.1, 0.0, 1.0, 10, [np.inf, 0], [0, 0])
    with pytest.raises(ValueError):
        DirichletProblem(spec_of(ABS, dim=2), CouplingMatrix(np.ones((1, 1))), 0.1, 0.0, 1.0, 10, [0], [0])
