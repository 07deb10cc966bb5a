"""Effective Cauchy problem with tabulated ``H_bar``, matched solutions and the rate harness."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from coupledhj.cell import EffectiveTable, build_table
from coupledhj.evolution import CFLError, EpsSystemProblem, apply_coupling, evolve
from coupledhj.expm import coupling_propagator
from coupledhj.grid import CouplingMatrix, StateField, TorusGrid
from coupledhj.hamiltonians import HamiltonianSpec


@dataclass
class EffectiveProblem:
    """``u_t + H_bar(Du) = 0`` with ``u(., 0) = fbar`` and ``H_bar`` interpolated from a table."""

    table: EffectiveTable
    fbar: np.ndarray
    grid: TorusGrid
    T: float
    clamped_queries: int = 0
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.fbar = np.asarray(self.fbar, dtype=float)
        if self.fbar.shape != self.grid.shape:
            raise ValueError("fbar must live on the grid")
        if self.table.dim != self.grid.dim:
            raise ValueError("table and grid dimensions differ")
        self.theta = float(np.max(self.table.max_slope()))

    @property
    def dt_max(self) -> float:
        return np.inf if self.theta == 0 else self.grid.h / (2.0 * self.grid.dim * self.theta)


def _effective_step(problem: EffectiveProblem, u: np.ndarray, dt: float) -> np.ndarray:
    if dt > problem.dt_max * (1.0 + 1e-12):
        raise CFLError(dt, problem.dt_max)
    h = problem.grid.h
    dm = np.stack([(u - np.roll(u, 1, axis=k)) / h for k in range(u.ndim)])
    dp = np.stack([(np.roll(u, -1, axis=k) - u) / h for k in range(u.ndim)])
    H, clamped = problem.table.interpolate(0.5 * (dm + dp))
    problem.clamped_queries += clamped
    return u - dt * (H - 0.5 * problem.theta * np.sum(dp - dm, axis=0))


def solve_effective(problem: EffectiveProblem, sample_times: Sequence[float], cfl: float = 0.9) -> list[StateField]:
    """Lax-Friedrichs evolution with ``theta`` = the table's largest adjacent slope.

    Sample times off the base lattice ``k T / n`` are reached by a truncated
    side step, as in the coupled solver. Clamped table queries are counted in
    ``problem.clamped_queries`` and turned into a warning.
    """
    times = np.asarray(sample_times, dtype=float)
    if np.any(np.diff(times) < 0) or (len(times) and (times[0] < 0 or times[-1] > problem.T * (1 + 1e-12))):
        raise ValueError("sample times must be increasing within [0, T]")
    n = 1 if not np.isfinite(problem.dt_max) else max(1, int(np.ceil(problem.T / (cfl * problem.dt_max))))
    dt0 = problem.T / n
    u = problem.fbar.copy()
    k = 0
    out = []
    for t in times:
        target = min(int(np.floor(t / dt0 + 1e-9)), n)
        while k < target:
            u = _effective_step(problem, u, dt0)
            k += 1
        rest = t - k * dt0
        snap = _effective_step(problem, u, rest) if rest > 1e-12 * max(1.0, problem.T) else u.copy()
        out.append(StateField(problem.grid, snap[None], float(t)))
    if problem.clamped_queries:
        problem.warnings.append(f"{problem.clamped_queries} table queries clamped to the lattice hull")
    return out


def inner_solution(f1: np.ndarray, f2: np.ndarray, t_fast: float) -> tuple[np.ndarray, np.ndarray]:
    """Inner-layer solution ``fbar +/- (f1 - f2)/2 e^{-2 t}`` in the fast time ``t``."""
    f1 = np.asarray(f1, dtype=float)
    f2 = np.asarray(f2, dtype=float)
    mean = 0.5 * (f1 + f2)
    osc = 0.5 * (f1 - f2) * math.exp(-2.0 * t_fast)
    return mean + osc, mean - osc


@dataclass
class MatchedTrajectory:
    """Matched functions ``m_i = u + [e^{t(K-I)/eps}(f - fbar j)]_i`` at the run times."""

    times: np.ndarray
    values: list[np.ndarray]
    u: list[StateField]
    eps: float


def matched_solutions(u_run: Sequence[StateField], f: np.ndarray, eps: float,
                      K: CouplingMatrix | None = None) -> MatchedTrajectory:
    """Outer solution plus decaying layer; for two symmetric states the layer is ``(f_i - f_j)/2 e^{-2t/eps}``."""
    f = np.asarray(f, dtype=float)
    K = K or CouplingMatrix.symmetric(f.shape[0])
    h = f - K.average(f)[None]
    vals = []
    for s in u_run:
        E = coupling_propagator(K.matrix, s.time, eps)
        vals.append(s.values[0][None] + apply_coupling(E, h))
    return MatchedTrajectory(np.array([s.time for s in u_run]), vals, list(u_run), float(eps))


@dataclass
class RateRow:
    epsilon: float
    grid_N: int
    E_total: float
    E_layer: float
    E_bulk: float
    layer_constant: float
    error_vs_u: float
    component_gap: float
    ok: bool = True
    message: str = ""


@dataclass
class RateReport:
    rows: list[RateRow]
    fitted_slope: float
    layer_constants: np.ndarray
    layer_spread: float
    ratios: list[float]
    check_time: float
    runs: dict[float, tuple[EpsSystemProblem, list[StateField]]] = field(default_factory=dict, repr=False)
    table: EffectiveTable | None = field(default=None, repr=False)

    def summary(self) -> dict[str, Any]:
        return {
            "fitted_slope": self.fitted_slope,
            "layer_constants": self.layer_constants.tolist(),
            "layer_spread": self.layer_spread,
            "ratios": self.ratios,
            "check_time": self.check_time,
            "E_total": [r.E_total for r in self.rows],
            "flagged": [r.epsilon for r in self.rows if not r.ok],
        }

    def to_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epsilon", "grid_N", "E_total", "E_layer", "E_bulk", "fitted_slope"])
            for r in self.rows:
                w.writerow([f"{r.epsilon:.17g}", r.grid_N, f"{r.E_total:.17g}", f"{r.E_layer:.17g}",
                            f"{r.E_bulk:.17g}", f"{self.fitted_slope:.17g}"])

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")


def grid_rule(eps: float, eps_cells: int = 32) -> int:
    """Points per axis with ``h = eps / eps_cells`` (``1/eps`` must be an integer)."""
    n = eps_cells / eps
    if abs(n - round(n)) > 1e-9 * n:
        raise ValueError(f"eps_cells/eps must be an integer, got {n}")
    return int(round(n))


def rate_harness(spec: HamiltonianSpec, K: CouplingMatrix, f: Sequence[Callable[[np.ndarray], np.ndarray]],
                 eps_list: Sequence[float], T: float, eps_cells: int = 32, table: EffectiveTable | None = None,
                 table_axes: Sequence[np.ndarray] | None = None, table_grid_N: int = 256,
                 n_layer: int = 41, n_bulk: int = 101, eff_N: int | None = None, check_time: float = 0.1,
                 keep_runs: bool = False, flux: str = "llf") -> RateReport:
    """Errors between the coupled solution and matched functions along an ``eps`` sweep.

    Parameters
    ----------
    f : callables
        Initial data ``f_i(x)`` evaluated on point arrays with leading axis ``dim``.
    table : EffectiveTable, optional
        Effective Hamiltonian; built on ``table_axes`` (default ``linspace(-4, 4, 33)``
        per axis) when absent.
    eff_N : int, optional
        Points per axis of the effective solve; defaults to 8 times the finest
        coupled grid so the outer solution is sampled at every coarse point.
    """
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be decreasing")
    dim = spec.dim
    if table is None:
        axes = table_axes or [np.linspace(-4.0, 4.0, 33)] * dim
        table = build_table(spec, K, axes, grid=TorusGrid(dim, table_grid_N))
    Ns = [grid_rule(e, eps_cells) for e in eps_list]
    eff_N = eff_N or 8 * max(Ns)
    if any(eff_N % n for n in Ns):
        raise ValueError("eff_N must be a multiple of every coupled grid size")
    rows: list[RateRow] = []
    runs: dict[float, tuple[EpsSystemProblem, list[StateField]]] = {}
    eff_grid = TorusGrid(dim, eff_N)
    fbar_fine = K.average(np.stack([fi(eff_grid.mesh()) for fi in f]))
    for eps, N in zip(eps_list, Ns):
        try:
            grid = TorusGrid(dim, N)
            fa = np.stack([fi(grid.mesh()) for fi in f])
            t_layer = min(eps * abs(math.log(eps)), T)
            times = np.union1d(np.union1d(np.linspace(0.0, t_layer, n_layer), np.linspace(t_layer, T, n_bulk)),
                               [check_time])
            prob = EpsSystemProblem(spec, K, eps, grid, fa, T, flux=flux)
            run = evolve(prob, times)
            eprob = EffectiveProblem(table, fbar_fine, eff_grid, T)
            urun_fine = solve_effective(eprob, times)
            stride = eff_N // N
            sl = tuple(slice(None, None, stride) for _ in range(dim))
            urun = [StateField(grid, s.values[(slice(None), *sl)], s.time) for s in urun_fine]
            matched = matched_solutions(urun, fa, eps, K)
            errs = np.array([np.max(np.abs(r.values - mv)) for r, mv in zip(run, matched.values)])
            layer = times <= t_layer + 1e-14
            bulk = times >= t_layer - 1e-14
            E_layer, E_bulk = float(errs[layer].max()), float(errs[bulk].max())
            ic = int(np.argmin(np.abs(times - check_time)))
            err_u = float(np.max(np.abs(run[ic].values - urun[ic].values[0][None])))
            gap = float(np.max(np.ptp(run[ic].values, axis=0)))
            row = RateRow(eps, N, float(errs.max()), E_layer, E_bulk, E_layer / (eps * abs(math.log(eps))), err_u, gap)
            if eprob.warnings:
                row.message = "; ".join(eprob.warnings)
            if keep_runs:
                runs[eps] = (prob, run)
        except (ValueError, CFLError, FloatingPointError) as exc:
            row = RateRow(eps, N, np.nan, np.nan, np.nan, np.nan, np.nan, np.nan, ok=False, message=str(exc))
        rows.append(row)
    good = [r for r in rows if r.ok and r.E_total > 0]
    if len(good) >= 2:
        slope = float(np.polyfit(np.log([r.epsilon for r in good]), np.log([r.E_total for r in good]), 1)[0])
    else:
        slope = float("nan")
    consts = np.array([r.layer_constant for r in rows])
    spread = float(np.nanmax(np.abs(consts / np.nanmean(consts) - 1.0))) if np.any(np.isfinite(consts)) else float("nan")
    ratios = [rows[k].E_total / rows[k + 1].E_total for k in range(len(rows) - 1)]
    return RateReport(rows, slope, consts, spread, ratios, check_time, runs, table)
