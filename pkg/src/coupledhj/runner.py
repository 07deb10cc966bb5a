"""Execution of validated experiment configs: artifacts, verdicts and manifest."""
from __future__ import annotations

import csv
import hashlib
import json
import math
import platform
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable

import numpy as np

from coupledhj import __version__
from coupledhj.cell import NonConvergenceError, build_table, correctors, effective_at, lower_bound
from coupledhj.config import ExperimentConfig
from coupledhj.dirichlet import DirichletProblem, effective_datum, solve_dirichlet_eps, solve_dirichlet_effective
from coupledhj.effective import grid_rule, rate_harness
from coupledhj.evolution import (EpsSystemProblem, apply_coupling, build_barriers, check_sandwich, evolve, propagator,
                                 write_snapshots_csv)
from coupledhj.fields import explicit_correctors, make_field
from coupledhj.grid import CouplingMatrix, TorusGrid
from coupledhj.montecarlo import (ExitPolicy, NeverExitPolicy, SwitchingChainSpec, best_constant_velocity, check_dpp,
                                  hopf_lax_value, mc_effective_estimate, mc_value_cauchy, mc_value_dirichlet,
                                  sample_chain, write_mc_csv)
from coupledhj.properties import EXPERIMENTS, companion_tables, run_elementary_checks, run_flat_experiment


@dataclass
class RunContext:
    config: ExperimentConfig
    out: Path
    artifacts: list[Path] = field(default_factory=list)
    verdicts: dict[str, dict[str, Any]] = field(default_factory=dict)
    summary: dict[str, Any] = field(default_factory=dict)

    def path(self, name: str) -> Path:
        p = self.out / name
        self.artifacts.append(p)
        return p

    def verdict(self, name: str, passed: bool, **detail: Any) -> None:
        self.verdicts[name] = {"passed": bool(passed), **_jsonable(detail)}


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _data_funcs(entries: list[Any]) -> list[Callable[[np.ndarray], np.ndarray]]:
    return [make_field(e) for e in entries]


def _solver_kw(cfg: ExperimentConfig) -> dict[str, Any]:
    s = cfg.solver
    kw: dict[str, Any] = {"flux": s.flux, "max_steps": s.max_steps}
    if s.R_grad is not None:
        kw["R_grad"] = s.R_grad
    return kw


def _write_rows(path: Path, header: list[str], rows: list[list[Any]]) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([f"{v:.17g}" if isinstance(v, (float, np.floating)) else v for v in r])


def run_cell(ctx: RunContext) -> None:
    cfg, blk = ctx.config, ctx.config.cell
    spec, K = cfg.spec(), cfg.coupling_matrix()
    grid = TorusGrid(cfg.dim, cfg.solver.N)
    rows = []
    for idx, P in enumerate(blk.P):
        est = effective_at(spec, K, P, cfg.solver.deltas, cfg.solver.tol, grid, **_solver_kw(cfg))
        lo = lower_bound(spec, P, K)
        rows.append([*P, est.H_bar, est.error_bar, lo, *est.estimates])
        sol = est.finest
        v = correctors(sol)
        if cfg.dim == 1:
            _write_rows(ctx.path(f"correctors_{idx}.csv"), ["xi"] + [f"v{i + 1}" for i in range(spec.m)],
                        [[x, *v[:, k]] for k, x in enumerate(grid.axis())])
        Pn = np.asarray(P, dtype=float)
        if blk.expect is not None:
            target = blk.expect.target(Pn)
            ctx.verdict(f"H_bar{P}", abs(est.H_bar - target) <= blk.expect.tol, H_bar=est.H_bar, target=target,
                        tol=blk.expect.tol, err_bar=est.error_bar)
        if blk.lower_bound is not None:
            ctx.verdict(f"lower_bound{P}", abs(lo - blk.lower_bound) <= blk.lower_bound_tol, lower_bound=lo,
                        expected=blk.lower_bound)
        if blk.strict_gap:
            ctx.verdict(f"strict_gap{P}", est.H_bar - (est.error_bar + 1e-9) > lo, H_bar=est.H_bar, lower_bound=lo)
        ctx.verdict(f"gradient_range{P}", not sol.gradient_exceeded, max_gradient=sol.max_gradient,
                    R_grad=sol.R_grad)
    names = [f"P{k + 1}" for k in range(cfg.dim)]
    deltas = [f"estimate_delta_{d:g}" for d in cfg.solver.deltas]
    _write_rows(ctx.path("cell.csv"), names + ["H_bar", "err_bar", "lower_bound"] + deltas, rows)


def run_table(ctx: RunContext) -> None:
    cfg, blk = ctx.config, ctx.config.table
    spec, K = cfg.spec(), cfg.coupling_matrix()
    grid = TorusGrid(cfg.dim, cfg.solver.N)
    kw = _solver_kw(cfg)
    if blk.elementary:
        tables = companion_tables(spec, K, blk.axes, grid, cfg.solver.deltas, cfg.solver.tol, cfg.jobs)
        table = tables["table"]
        rep = run_elementary_checks(table, spec, tables.get("single"), tables.get("max"))
        for e in rep.entries:
            if not e.skipped:
                ctx.verdict(e.name, e.passed, **e.detail)
        for name, t in tables.items():
            if name != "table":
                t.to_csv(ctx.path(f"table_{name}.csv"))
        ctx.path("elementary.json").write_text(json.dumps(_jsonable(rep.to_dict()), indent=2, sort_keys=True) + "\n")
    else:
        table = build_table(spec, K, blk.axes, cfg.solver.deltas, cfg.solver.tol, grid, cfg.jobs, **kw)
        if table.failures and all("did not reach" in m for m in table.failures.values()):
            table.to_csv(ctx.path("table.csv"))
            raise NonConvergenceError("; ".join(table.failures.values()), [])
    table.to_csv(ctx.path("table.csv"))
    if table.failures:
        ctx.verdict("table_complete", False, failures=table.failures)
    if blk.expect is not None:
        worst = 0.0
        for P, H in zip(table.points(), table.H_bar.ravel()):
            worst = max(worst, abs(H - blk.expect.target(P)))
        ctx.verdict("H_bar_expected", worst <= blk.expect.tol, max_deviation=worst, tol=blk.expect.tol)
    if blk.corrector_check is not None:
        cc = blk.corrector_check
        est = effective_at(spec, K, [cc.P], cfg.solver.deltas, cfg.solver.tol, grid, **kw)
        v = correctors(est.finest)
        x = grid.axis()
        e1, e2 = explicit_correctors(x, float(np.sign(cc.P)))
        err = float(np.max(np.abs((v[0] - v[1]) - (e1 - e2))))
        _write_rows(ctx.path("correctors.csv"), ["xi", "v1", "v2", "exact_v1", "exact_v2"],
                    [[x[k], v[0, k], v[1, k], e1[k], e2[k]] for k in range(x.size)])
        ctx.verdict("corrector_difference", err <= cc.tol, sup_error=err, tol=cc.tol, P=cc.P)


def _eps_run(cfg: ExperimentConfig, eps: float, eps_cells: int, T: float, f: list[Any], times: list[float]):
    N = grid_rule(eps, eps_cells)
    grid = TorusGrid(cfg.dim, N)
    fa = np.stack([fi(grid.mesh()) for fi in _data_funcs(f)])
    prob = EpsSystemProblem(cfg.spec(), cfg.coupling_matrix(), eps, grid, fa, T, flux=cfg.solver.flux)
    return prob, evolve(prob, times)


def spectral_decay_check(K: CouplingMatrix, eps: float, dt: float, n: int = 64, seed: int = 0) -> dict[str, float]:
    """Coupling step on eigenvector data: exact factor ``exp(dt (lambda - 1)/eps)`` per mean-zero mode."""
    E = propagator(K, dt, eps)
    lam, vec = np.linalg.eigh(K.matrix) if np.allclose(K.matrix, K.matrix.T) else np.linalg.eig(K.matrix)
    lam, vec = np.real(lam), np.real(vec)
    g = np.cos(2 * np.pi * np.arange(n) / n) + 0.3
    worst = 0.0
    factor = 0.0
    for k in range(K.m):
        if abs(lam[k] - 1.0) < 1e-12:
            continue
        u = vec[:, k][:, None] * g[None]
        fk = math.exp(dt * (lam[k] - 1.0) / eps)
        factor = max(factor, fk)
        worst = max(worst, float(np.max(np.abs(apply_coupling(E, u) - fk * u))))
    rng = np.random.default_rng(seed)
    w = rng.normal(size=(K.m, n))
    w -= w.mean(axis=0)
    ratio = float(np.linalg.norm(apply_coupling(E, w)) / np.linalg.norm(w))
    return {"max_eigen_error": worst, "spectral_factor": factor, "random_mean_zero_ratio": ratio}


def run_evolve(ctx: RunContext) -> None:
    cfg, blk = ctx.config, ctx.config.evolve
    times = sorted(set((blk.times or []) + [blk.T, blk.check_time] + list(blk.extrapolation_times)))
    times = [t for t in times if t <= blk.T + 1e-14]
    gaps = []
    last = None
    for eps in blk.eps:
        prob, run = _eps_run(cfg, eps, blk.eps_cells, blk.T, blk.f, [0.0] + times)
        write_snapshots_csv(ctx.path(f"snapshots_eps_{eps:g}.csv"), run)
        if "sandwich" in blk.checks:
            bar = build_barriers(prob, [s.time for s in run])
            rep = check_sandwich(prob, run, bar, blk.sandwich_slack_h * prob.grid.h)
            ctx.verdict(f"sandwich_eps_{eps:g}", rep.passed, violations=rep.n_violations, C=bar.C)
        ic = int(np.argmin([abs(s.time - blk.check_time) for s in run]))
        gaps.append(float(np.max(np.ptp(run[ic].values, axis=0))))
        last = (prob, run)
    if "gaps_decrease" in blk.checks:
        ctx.verdict("gaps_decrease", all(b < a for a, b in zip(gaps, gaps[1:])), gaps=gaps, eps=blk.eps)
    if "mean_extrapolation" in blk.checks:
        prob, run = last
        ts = np.asarray(blk.extrapolation_times)
        means = [next(s for s in run if abs(s.time - t) < 1e-12).values.mean(axis=0) for t in ts]
        coef = np.polyfit(ts, np.stack([m.ravel() for m in means]), 2)
        u0 = coef[-1]
        target = prob.f.mean(axis=0).ravel()
        err = float(np.max(np.abs(u0 - target)))
        ctx.verdict("mean_extrapolation", err <= blk.extrapolation_tol, max_error=err, tol=blk.extrapolation_tol)
    if "spectral_decay" in blk.checks:
        K = cfg.coupling_matrix()
        out = {}
        ok = True
        for eps in blk.eps:
            d = spectral_decay_check(K, eps, 0.01 * eps, seed=cfg.seed)
            out[f"{eps:g}"] = d
            ok &= d["max_eigen_error"] <= 1e-10 and d["random_mean_zero_ratio"] <= d["spectral_factor"] + 1e-12
        ctx.verdict("spectral_decay", ok, **out)
    ctx.summary["gaps"] = gaps


def run_rate(ctx: RunContext) -> None:
    cfg, blk = ctx.config, ctx.config.rate
    spec, K = cfg.spec(), cfg.coupling_matrix()
    lo, hi, n = blk.table_axes
    axes = [np.linspace(lo, hi, int(n))] * cfg.dim
    table = build_table(spec, K, axes, cfg.solver.deltas, cfg.solver.tol, TorusGrid(cfg.dim, blk.table_N), cfg.jobs)
    table.to_csv(ctx.path("table.csv"))
    rep = rate_harness(spec, K, _data_funcs(blk.f), blk.eps, blk.T, blk.eps_cells, table=table,
                       check_time=blk.check_time, keep_runs="sandwich" in blk.checks, flux=cfg.solver.flux)
    rep.to_csv(ctx.path("rate.csv"))
    rep.to_json(ctx.path("rate.json"))
    rows = rep.rows
    E = [r.E_total for r in rows]
    if "slope" in blk.checks:
        ctx.verdict("fitted_slope", rep.fitted_slope >= blk.min_slope, fitted_slope=rep.fitted_slope,
                    min_slope=blk.min_slope)
    if "monotone" in blk.checks:
        ctx.verdict("E_decreasing", all(b < a for a, b in zip(E, E[1:])), E_total=E)
    if "layer" in blk.checks:
        ctx.verdict("layer_constant_stable", rep.layer_spread <= blk.layer_spread, layer_spread=rep.layer_spread,
                    layer_constants=rep.layer_constants)
    if "initial_datum" in blk.checks:
        eu = [r.error_vs_u for r in rows]
        ctx.verdict("distance_to_u_decreasing", all(b < a for a, b in zip(eu, eu[1:])), error_vs_u=eu)
    if "gap" in blk.checks:
        gap = rows[-1].component_gap
        ctx.verdict("component_gap", gap <= blk.gap_tol, gap=gap, tol=blk.gap_tol, eps=rows[-1].epsilon)
    if "sandwich" in blk.checks:
        prob, run = rep.runs[blk.sandwich_eps]
        bar = build_barriers(prob, [s.time for s in run])
        sw = check_sandwich(prob, run, bar, blk.sandwich_slack_h * prob.grid.h)
        ctx.verdict(f"sandwich_eps_{blk.sandwich_eps:g}", sw.passed, violations=sw.n_violations, C=bar.C)
    ctx.summary.update(rep.summary())


def run_flat(ctx: RunContext) -> None:
    cfg, blk = ctx.config, ctx.config.flat
    builder = EXPERIMENTS[blk.experiment]
    if blk.eps0 is not None:
        if blk.experiment != "thm-4.10":
            raise ValueError("eps0 applies to thm-4.10 only")
        exp = builder(blk.eps0)
    else:
        exp = builder()
    rep = run_flat_experiment(exp, cfg.solver.deltas, None, blk.N, cfg.jobs)
    rep.to_json(ctx.path("flat.json"))
    _write_rows(ctx.path("flat.csv"), [f"P{k + 1}" for k in range(exp.dim)] +
                ["H_bar", "err_bar", "lower_cert", "upper_cert", "target", "passed"],
                [[*r.P, r.H_bar, r.err_bar, r.lower_cert, r.upper_cert if r.upper_cert is not None else "",
                  r.target, int(r.passed)] for r in rep.rows])
    ctx.verdict("hypotheses", all(rep.hypotheses.values()), **rep.hypotheses)
    ctx.verdict("prediction", rep.passed, gamma_scan=rep.gamma_scan, gamma_formula=rep.gamma_formula, **rep.extra)
    if "certificate_at_gamma" in rep.extra:
        ctx.verdict("subsolution_certificate", rep.extra["certificate_at_gamma"] <= 1e-12,
                    certificate=rep.extra["certificate_at_gamma"])


def run_dirichlet(ctx: RunContext) -> None:
    cfg, blk = ctx.config, ctx.config.dirichlet
    spec, K = cfg.spec(), cfg.coupling_matrix()
    a, b = blk.interval
    lo, hi, n = blk.table_axes
    table = build_table(spec, K, [np.linspace(lo, hi, int(n))], cfg.solver.deltas, cfg.solver.tol,
                        TorusGrid(1, blk.table_N), cfg.jobs)
    table.to_csv(ctx.path("table.csv"))
    gl, gr = effective_datum(blk.g_left), effective_datum(blk.g_right)
    eff = solve_dirichlet_effective(table, a, b, blk.N, gl, gr, blk.tol)
    eff.to_csv(ctx.path("dirichlet_effective.csv"))
    distinct_left = len(set(blk.g_left)) > 1
    nodes = (np.arange(1, blk.adjacent + 1) if distinct_left else blk.N - np.arange(1, blk.adjacent + 1))
    sup_gaps, adj_gaps = [], []
    for eps in blk.eps:
        sol = solve_dirichlet_eps(DirichletProblem(spec, K, eps, a, b, blk.N, blk.g_left, blk.g_right,
                                                   cfg.solver.flux), blk.tol)
        sol.to_csv(ctx.path(f"dirichlet_eps_{eps:g}.csv"))
        sup_gaps.append(float(np.max(np.abs(sol.values - eff.values[0][None]))))
        adj_gaps.append(float(np.max(np.abs(sol.values[:, nodes] - eff.values[0][nodes][None]))))
    ctx.verdict("adjacent_gap", adj_gaps[-1] <= blk.gap_tol, adjacent_gaps=adj_gaps, sup_gaps=sup_gaps,
                eps=blk.eps, tol=blk.gap_tol, effective_datum=[gl, gr])
    ctx.verdict("sup_gap_nonincreasing", all(y <= x + 1e-12 for x, y in zip(sup_gaps, sup_gaps[1:])),
                sup_gaps=sup_gaps)


def run_mc(ctx: RunContext) -> None:
    cfg, blk = ctx.config, ctx.config.mc
    spec, K = cfg.spec(), cfg.coupling_matrix()
    chain = SwitchingChainSpec(K, blk.eps, cfg.seed)
    rows = []
    if blk.mode == "jump_law":
        dt = blk.dt or 0.1 * blk.eps / float(np.max(K.rates))
        rate = float(K.rates[0]) / blk.eps
        s = sample_chain(chain, blk.t, dt, blk.paths, 0, lattice=False)
        p = math.exp(-rate * blk.t)
        freq = float(np.mean(s.first_jump > blk.t))
        se = math.sqrt(p * (1 - p) / blk.paths)
        ctx.verdict("no_jump_frequency", abs(freq - p) <= 3 * se, frequency=freq, exact=p, std_error=se)
        rows.append({"x": 0.0, "t_or_mode": "no_jump", "estimate": freq, "std_error": se, "paths": blk.paths,
                     "discard_rate": 0.0})
        if np.allclose(K.rates, K.rates[0]):
            mean = float(s.jump_counts.mean())
            se_c = float(s.jump_counts.std(ddof=1) / math.sqrt(blk.paths))
            ctx.verdict("jump_count_mean", abs(mean - rate * blk.t) <= 3 * se_c, mean=mean, exact=rate * blk.t,
                        std_error=se_c)
            rows.append({"x": 0.0, "t_or_mode": "jump_count", "estimate": mean, "std_error": se_c,
                         "paths": blk.paths, "discard_rate": 0.0})
    elif blk.mode == "coupling":
        f = _data_funcs(blk.f)
        est = mc_value_cauchy(spec, chain, blk.x, blk.t, f, NeverExitPolicy(), blk.paths, blk.dt)
        fx = np.array([fi(np.array([[blk.x]]))[0] for fi in f])
        exact = float((propagator(K, blk.t, blk.eps) @ fx)[0])
        ctx.verdict("coupling_closed_form", abs(est.estimate - exact) <= 3 * est.std_error + 1e-12,
                    estimate=est.estimate, exact=exact, std_error=est.std_error)
        rows.append({"x": blk.x, "t_or_mode": f"{blk.t:g}", "estimate": est.estimate, "std_error": est.std_error,
                     "paths": est.paths, "discard_rate": est.discard_rate})
    elif blk.mode == "hopf_lax":
        f = _data_funcs(blk.f)
        a = float(spec.components[0].a(np.zeros((1, 1)))[0])
        dt = blk.dt or blk.t / 20
        R = 2.0 / blk.t
        v, est = best_constant_velocity(spec, chain, blk.x, blk.t, f, np.linspace(-R, R, 401), blk.paths, dt)
        exact = hopf_lax_value(f[0], blk.x, blk.t, a)
        bias = (R / 200) ** 2 / (4 * a) * blk.t + 1e-9
        ok = exact - 3 * est.std_error - 1e-9 <= est.estimate <= exact + 3 * est.std_error + bias
        ctx.verdict("hopf_lax", ok, estimate=est.estimate, exact=exact, velocity=v, lattice_bias=bias)
        rows.append({"x": blk.x, "t_or_mode": f"{blk.t:g}", "estimate": est.estimate, "std_error": est.std_error,
                     "paths": est.paths, "discard_rate": est.discard_rate})
    elif blk.mode == "dirichlet":
        a, b = blk.interval
        est = mc_value_dirichlet(spec, chain, blk.x, blk.g_left, blk.g_right, (a, b),
                                 ExitPolicy(spec, blk.eps, blk.exit_side, blk.exit_states), blk.paths, blk.dt)
        table = build_table(spec, K, [np.linspace(-4, 4, 81)], cfg.solver.deltas, cfg.solver.tol,
                            TorusGrid(1, 256), cfg.jobs)
        N = 400
        eff = solve_dirichlet_effective(table, a, b, N, effective_datum(blk.g_left), effective_datum(blk.g_right))
        ref = float(np.interp(blk.x, eff.x, eff.values[0]))
        ok = est.estimate + 3 * est.std_error >= ref - 1e-2 and abs(est.estimate - ref) <= blk.expect_tol
        ctx.verdict("dirichlet_policy_value", ok, estimate=est.estimate, effective=ref, std_error=est.std_error,
                    tol=blk.expect_tol)
        rows.append({"x": blk.x, "t_or_mode": "exit", "estimate": est.estimate, "std_error": est.std_error,
                     "paths": est.paths, "discard_rate": est.discard_rate})
    else:
        est = mc_effective_estimate(spec, chain, blk.P, blk.horizon, blk.n_vel, paths=max(blk.paths // 16, 32),
                                    final_paths=blk.paths, dt=blk.dt or 0.05)
        grid = TorusGrid(cfg.dim, cfg.solver.N)
        ref, _ = effective_at(spec, K, [blk.P], cfg.solver.deltas, cfg.solver.tol, grid)
        rel = abs(est.estimate - ref) / max(abs(ref), 1e-12)
        ctx.verdict("effective_estimate", rel <= blk.expect_tol, estimate=est.estimate, reference=ref,
                    relative_error=rel, velocities=est.extra["velocities"])
        rows.append({"x": blk.P, "t_or_mode": f"horizon={blk.horizon:g}", "estimate": est.estimate,
                     "std_error": est.std_error, "paths": est.paths, "discard_rate": est.discard_rate})
    write_mc_csv(ctx.path("mc.csv"), rows)


def run_dpp(ctx: RunContext) -> None:
    cfg, blk = ctx.config, ctx.config.dpp
    spec, K = cfg.spec(), cfg.coupling_matrix()
    chain = SwitchingChainSpec(K, blk.eps, cfg.seed)
    rep = check_dpp(spec, chain, blk.x, blk.t, blk.h_split, blk.paths, _data_funcs(blk.f), blk.dt, blk.N)
    ctx.verdict("dpp", rep.passed, one_shot=rep.one_shot.estimate, nested=rep.nested.estimate,
                difference=rep.difference, tolerance=rep.tolerance, pde_value=rep.pde_value)
    rows = [{"x": blk.x, "t_or_mode": name, "estimate": e.estimate, "std_error": e.std_error, "paths": e.paths,
             "discard_rate": e.discard_rate} for name, e in (("one_shot", rep.one_shot), ("nested", rep.nested))]
    write_mc_csv(ctx.path("mc.csv"), rows)


RUNNERS: dict[str, Callable[[RunContext], None]] = {
    "cell": run_cell,
    "table": run_table,
    "evolve": run_evolve,
    "rate": run_rate,
    "flat": run_flat,
    "dirichlet": run_dirichlet,
    "mc": run_mc,
    "dpp": run_dpp,
}

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_NONCONVERGENCE = 0, 1, 2, 3


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _versions() -> dict[str, str]:
    import numba
    import pydantic
    import yaml

    return {"coupledhj": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "numba": numba.__version__, "pydantic": pydantic.__version__, "pyyaml": yaml.__version__}


def execute(config: ExperimentConfig, out: str | Path) -> int:
    """Run ``config``, write artifacts plus ``verdicts.json`` and ``manifest.json`` into ``out``.

    Returns the process exit status: 0 when every verdict passes, 1 on a
    failed verdict, 3 on numerical nonconvergence (partial artifacts kept).
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    ctx = RunContext(config, out)
    started = datetime.now(timezone.utc).isoformat()
    t0 = time.perf_counter()
    status = EXIT_PASS
    error = None
    try:
        RUNNERS[config.kind](ctx)
    except NonConvergenceError as exc:
        status, error = EXIT_NONCONVERGENCE, str(exc)
    runtime = time.perf_counter() - t0
    passed = error is None and all(v["passed"] for v in ctx.verdicts.values())
    if status == EXIT_PASS and not passed:
        status = EXIT_FAIL
    verdicts = {"experiment": config.name, "kind": config.kind, "passed": passed, "error": error,
                "verdicts": ctx.verdicts}
    vpath = ctx.path("verdicts.json")
    vpath.write_text(json.dumps(_jsonable(verdicts), indent=2, sort_keys=True) + "\n")
    manifest = {
        "experiment": config.name,
        "kind": config.kind,
        "config": config.model_dump(mode="json"),
        "versions": _versions(),
        "started_utc": started,
        "runtime_seconds": runtime,
        "exit_status": status,
        "passed": passed,
        "summary": _jsonable(ctx.summary),
        "artifacts": [{"file": p.name, "sha256": _sha256(p), "bytes": p.stat().st_size}
                      for p in ctx.artifacts if p.exists()],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return status
