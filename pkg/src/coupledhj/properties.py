"""Flat-part experiments and elementary structural checks of effective Hamiltonians.

Every experiment carries potentials built from exact plateau or cosine
primitives, a numerical audit of the structural hypotheses on those
potentials, and a prediction checked against ``effective_at`` estimates.
Elementary checks operate on computed ``EffectiveTable`` objects.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from coupledhj.cell import (DEFAULT_DELTAS, EffectiveTable, NonConvergenceError, build_table, effective_at,
                            lower_bound, upper_certificate)
from coupledhj.evolution import EpsSystemProblem, evolve
from coupledhj.fields import plateau
from coupledhj.grid import CouplingMatrix, TorusGrid
from coupledhj.hamiltonians import HamiltonianSpec

ZERO_TOL = 1e-14


def _fine_points(dim: int) -> np.ndarray:
    """Audit lattice: multiples of ``1/1600`` in 1D, ``1/320`` per axis in 2D."""
    n = 1600 if dim == 1 else 320
    ax = np.arange(n) / n
    return ax[None] if dim == 1 else np.stack(np.meshgrid(ax, ax, indexing="ij"))


def _away_from(x: np.ndarray, edges: Sequence[float], tol: float = 1e-9) -> np.ndarray:
    mask = np.ones(x.shape, dtype=bool)
    for e in edges:
        mask &= np.abs(x - e) > tol
    return mask


def _interval_set(x: np.ndarray, lo: float, hi: float) -> np.ndarray:
    return (x >= lo) & (x <= hi)


def _set_distance(A: np.ndarray, B: np.ndarray, pts: np.ndarray) -> float:
    """Periodic distance between two point masks on the audit lattice."""
    a = pts.reshape(pts.shape[0], -1)[:, A.ravel()]
    b = pts.reshape(pts.shape[0], -1)[:, B.ravel()]
    if a.size == 0 or b.size == 0:
        return float("inf")
    best = np.inf
    for start in range(0, a.shape[1], 2048):
        d = np.abs(a[:, start:start + 2048, None] - b[:, None, :])
        d = np.minimum(d, 1.0 - d)
        best = min(best, float(np.sqrt((d**2).sum(axis=0)).min()))
    return best


@dataclass
class FlatExperiment:
    """Quadratic pair ``H_i = |p|^2 - V_i`` with a predicted shape of ``H_bar`` near the origin.

    ``prediction`` is ``"flat"`` (``H_bar = 0`` near 0) or ``"stripe"``
    (``H_bar(P) = P_1^2`` for small ``|P'|`` and ``H_bar >= P_1^2`` always).
    ``hypotheses`` returns named boolean audits on the potentials;
    ``subsolution`` optionally builds an explicit periodic test pair at ``P``.
    """

    name: str
    potentials: list[Any]
    dim: int
    prediction: str
    P_samples: list[list[float]]
    tol: float
    grid_N: int
    hypotheses: Callable[[HamiltonianSpec], dict[str, bool]]
    subsolution: Callable[[np.ndarray, TorusGrid], np.ndarray] | None = None
    gamma_formula: float | None = None
    expect_lower_zero: bool = False
    solver_tol: float = 1e-6
    notes: str = ""

    def spec(self) -> HamiltonianSpec:
        return HamiltonianSpec.from_config([{"family": "quadratic", "a": 1.0, "V": V} for V in self.potentials], self.dim)

    @property
    def coupling(self) -> CouplingMatrix:
        return CouplingMatrix.symmetric(2)

    def audit(self) -> dict[str, bool]:
        return {k: bool(v) for k, v in self.hypotheses(self.spec()).items()}


def _plateau_V(inner, outer, inside, outside, axis: int = 0) -> dict[str, Any]:
    return {"name": "plateau", "inner": list(inner), "outer": list(outer), "inside": inside, "outside": outside,
            "axis": axis}


# Two overlapping wells inside nested windows W1 = (0.38, 0.62) and W2 = (0.3, 0.7).
_W1 = (0.38, 0.62)
_W2 = (0.30, 0.70)
_U1 = (0.45, 0.50)
_U2 = (0.48, 0.55)


def _thm48_psi(x: np.ndarray) -> np.ndarray:
    """``psi`` with ``P + P psi' = 0`` on ``W1`` and ``psi = 0`` off ``W2``."""
    return -(x - 0.5) * plateau(x, _W1, _W2)


def _thm48_gamma() -> float:
    x = np.linspace(0.0, 1.0, 200001)
    dpsi = np.gradient(_thm48_psi(x), x)
    eps0 = 1.0
    return float(np.sqrt(eps0) / np.max(np.abs(1.0 + dpsi)))


def thm48() -> FlatExperiment:
    """Nonnegative wells with overlapping zero sets nested in two windows."""
    pots = [_plateau_V(_U1, (_U1[0] - 0.05, _U1[1] + 0.05), 0.0, 1.0),
            _plateau_V(_U2, (_U2[0] - 0.05, _U2[1] + 0.05), 0.0, 1.0)]

    def hyp(spec: HamiltonianSpec) -> dict[str, bool]:
        pts = _fine_points(1)
        x = pts[0]
        V1, V2 = (c.V(pts) for c in spec.components)
        U1, U2 = V1 <= ZERO_TOL, V2 <= ZERO_TOL
        W1 = (x > _W1[0]) & (x < _W1[1])
        notW1 = ~W1
        return {
            "V_nonnegative": bool(V1.min() >= 0 and V2.min() >= 0),
            "U1_interval": bool(np.array_equal(U1[_away_from(x, _U1)], _interval_set(x, *_U1)[_away_from(x, _U1)])),
            "U2_interval": bool(np.array_equal(U2[_away_from(x, _U2)], _interval_set(x, *_U2)[_away_from(x, _U2)])),
            "U1_meets_U2": bool(np.any(U1 & U2)),
            "union_in_W1_with_margin": bool(_set_distance(U1 | U2, notW1, pts) > 0.05),
            "W1_in_W2_with_margin": bool(_W1[0] - _W2[0] > 0 and _W2[1] - _W1[1] > 0),
            "W2_compact_in_cell": bool(0.0 < _W2[0] and _W2[1] < 1.0),
            "V_positive_off_W1": bool(min(V1[notW1].min(), V2[notW1].min()) >= 1.0 - 1e-12),
        }

    def sub(P: np.ndarray, grid: TorusGrid) -> np.ndarray:
        phi = float(P[0]) * _thm48_psi(grid.axis())
        return np.stack([phi, phi])

    return FlatExperiment("thm-4.8", pots, 1, "flat", [[0.0], [0.05], [-0.05], [0.1], [-0.1], [0.2], [-0.2]],
                          0.03, 512, hyp, sub, _thm48_gamma(),
                          notes="subsolution pair (phi, phi) with phi = P psi certifies H_bar <= 0 below gamma")


def thm410(eps0: float = 0.05) -> FlatExperiment:
    """Slightly negative plateau potential paired with a tall narrow well (1/16 grid intervals)."""
    s = 1.0 / 16.0
    pots = [_plateau_V((4 * s, 12 * s), (3 * s, 13 * s), 0.0, -eps0),
            _plateau_V((7 * s, 9 * s), (6 * s, 10 * s), 0.0, 2.0)]

    def hyp(spec: HamiltonianSpec) -> dict[str, bool]:
        pts = _fine_points(1)
        x = pts[0]
        V1, V2 = (c.V(pts) for c in spec.components)
        e1 = [3 * s, 4 * s, 12 * s, 13 * s]
        e2 = [6 * s, 7 * s, 9 * s, 10 * s]
        m1, m2 = _away_from(x, e1), _away_from(x, e2)
        return {
            "V1_zero_set": bool(np.array_equal((V1 == 0)[m1], _interval_set(x, 4 * s, 12 * s)[m1])),
            "V1_min_set": bool(np.array_equal((V1 == -eps0)[m1], ~((x > 3 * s) & (x < 13 * s))[m1])),
            "V1_bounds": bool(V1.min() >= -eps0 and V1.max() <= 0),
            "V2_zero_set": bool(np.array_equal((V2 == 0)[m2], _interval_set(x, 7 * s, 9 * s)[m2])),
            "V2_max_set": bool(np.array_equal((V2 == 2)[m2], ~((x > 6 * s) & (x < 10 * s))[m2])),
            "V2_bounds": bool(V2.min() >= 0 and V2.max() <= 2),
            "min_V1_plus_V2_zero": bool(abs((V1 + V2).min()) <= ZERO_TOL),
        }

    return FlatExperiment(f"thm-4.10(eps0={eps0:g})", pots, 1, "flat",
                          [[0.0], [0.02], [-0.02], [0.05], [-0.05]], 0.03, 512, hyp, expect_lower_zero=True)


def thm412() -> FlatExperiment:
    """Zero potential paired with a single-point cosine well at 1/2."""
    pots = [0.0, {"name": "cosine_well", "center": 0.5}]

    def hyp(spec: HamiltonianSpec) -> dict[str, bool]:
        pts = _fine_points(1)
        V1, V2 = (c.V(pts) for c in spec.components)
        zeros = pts[0][V2 <= ZERO_TOL]
        return {
            "V1_identically_zero": bool(np.all(V1 == 0)),
            "V2_nonnegative": bool(V2.min() >= 0),
            "V2_single_zero_at_half": bool(zeros.size == 1 and zeros[0] == 0.5),
        }

    return FlatExperiment("thm-4.12", pots, 1, "flat", [[0.0], [0.05], [-0.05], [0.1], [-0.1]], 0.03, 512, hyp,
                          expect_lower_zero=True)


def _window_audit(V2: np.ndarray, pts: np.ndarray, W: tuple[float, float]) -> dict[str, bool]:
    x = pts[0]
    Z = V2 <= ZERO_TOL
    inW = (x > W[0]) & (x < W[1])
    return {
        "V2_zero_set_nonempty": bool(np.any(Z)),
        "V2_zero_set_in_W": bool(np.all(inW[Z]) and _set_distance(Z, ~inW, pts) > 0),
        "W_compact_in_cell": bool(0.0 < W[0] and W[1] < 1.0),
    }


def thm413() -> FlatExperiment:
    """Zero potential paired with a plateau well whose zero interval sits in a window."""
    W = (0.3, 0.7)
    pots = [0.0, _plateau_V((0.4, 0.6), (0.32, 0.68), 0.0, 1.0)]

    def hyp(spec: HamiltonianSpec) -> dict[str, bool]:
        pts = _fine_points(1)
        V1, V2 = (c.V(pts) for c in spec.components)
        out = {"V1_identically_zero": bool(np.all(V1 == 0)), "V2_nonnegative": bool(V2.min() >= 0)}
        out.update(_window_audit(V2, pts, W))
        return out

    return FlatExperiment("thm-4.13", pots, 1, "flat", [[0.0], [0.05], [-0.05], [0.1], [-0.1]], 0.03, 512, hyp,
                          expect_lower_zero=True)


def cor413() -> FlatExperiment:
    """Plateau well in a window paired with a well that only meets it on part of its zero set."""
    W = (0.3, 0.7)
    pots = [_plateau_V((0.5, 0.9), (0.45, 0.95), 0.0, 1.0), _plateau_V((0.45, 0.55), (0.35, 0.65), 0.0, 1.0)]

    def hyp(spec: HamiltonianSpec) -> dict[str, bool]:
        pts = _fine_points(1)
        V1, V2 = (c.V(pts) for c in spec.components)
        out = {"V_nonnegative": bool(V1.min() >= 0 and V2.min() >= 0),
               "zero_sets_meet": bool(np.any((V1 <= ZERO_TOL) & (V2 <= ZERO_TOL))),
               "V1_zero_set_leaves_W": bool(np.any((V1 <= ZERO_TOL) & ((pts[0] <= W[0]) | (pts[0] >= W[1]))))}
        out.update(_window_audit(V2, pts, W))
        return out

    return FlatExperiment("cor-4.13", pots, 1, "flat", [[0.0], [0.05], [-0.05], [0.1], [-0.1]], 0.03, 512, hyp,
                          expect_lower_zero=True)


def thm414(N: int = 64) -> FlatExperiment:
    """2D product wells: each potential depends on one coordinate and vanishes on one line."""
    pots = [{"name": "cosine_well", "axis": 0}, {"name": "cosine_well", "axis": 1}]

    def hyp(spec: HamiltonianSpec) -> dict[str, bool]:
        pts = _fine_points(2)
        V1, V2 = (c.V(pts) for c in spec.components)
        Z1, Z2 = V1 <= ZERO_TOL, V2 <= ZERO_TOL
        return {
            "V_nonnegative": bool(V1.min() >= 0 and V2.min() >= 0),
            "V1_depends_on_xi1_only": bool(np.all(V1 == V1[:, :1])),
            "V2_depends_on_xi2_only": bool(np.all(V2 == V2[:1, :])),
            "V1_zero_line_xi1_0": bool(np.array_equal(Z1, np.broadcast_to(pts[0] == 0, Z1.shape))),
            "V2_zero_line_xi2_0": bool(np.array_equal(Z2, np.broadcast_to(pts[1] == 0, Z2.shape))),
        }

    return FlatExperiment("thm-4.14", pots, 2, "flat",
                          [[0.0, 0.0], [0.05, 0.0], [0.0, 0.05], [-0.05, 0.0], [0.035, 0.035]], 0.03, N, hyp,
                          expect_lower_zero=True, solver_tol=1e-5)


def stripe(N: int = 128, beta: float = 0.5) -> FlatExperiment:
    """2D wells with the common zero line ``xi_2 = 1/2`` and different profiles off it."""
    pots = [{"name": "cosine_well", "center": 0.5, "axis": 1},
            {"name": "modulated_well", "center": 0.5, "axis": 1, "mod_axis": 0, "beta": beta}]

    def hyp(spec: HamiltonianSpec) -> dict[str, bool]:
        pts = _fine_points(2)
        V1, V2 = (c.V(pts) for c in spec.components)
        line = np.broadcast_to(pts[1] == 0.5, V1.shape)
        return {
            "V_nonnegative": bool(V1.min() >= 0 and V2.min() >= 0),
            "V1_zero_set_is_line": bool(np.array_equal(V1 <= ZERO_TOL, line)),
            "V2_zero_set_is_line": bool(np.array_equal(V2 <= ZERO_TOL, line)),
            "potentials_differ": bool(np.max(np.abs(V1 - V2)) > 0.1),
        }

    P = [[p1, p2] for p1 in (0.0, 0.25, 0.5) for p2 in (0.0, 0.25, 0.5)]
    return FlatExperiment("thm-4.9-stripe", pots, 2, "stripe", P, 0.05, N, hyp, solver_tol=1e-5)


EXPERIMENTS: dict[str, Callable[[], FlatExperiment]] = {
    "thm-4.8": thm48,
    "thm-4.9": stripe,
    "thm-4.10": thm410,
    "thm-4.12": thm412,
    "thm-4.13": thm413,
    "cor-4.13": cor413,
    "thm-4.14": thm414,
}


class HypothesisError(ValueError):
    """Constructed potentials fail their structural audit."""


@dataclass
class FlatRow:
    P: list[float]
    radius: float
    H_bar: float
    err_bar: float
    lower_cert: float
    upper_cert: float | None
    target: float
    passed: bool
    message: str = ""


@dataclass
class FlatReport:
    name: str
    prediction: str
    hypotheses: dict[str, bool]
    rows: list[FlatRow]
    gamma_scan: float
    gamma_formula: float | None
    passed: bool
    extra: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


def _gamma_scan(rows: list[FlatRow], key: Callable[[FlatRow], float]) -> float:
    """Largest sampled radius such that every sample at or below it passes."""
    gamma = 0.0
    for r in sorted(rows, key=key):
        if not r.passed:
            break
        gamma = key(r)
    return float(gamma)


def run_flat_experiment(exp: FlatExperiment, deltas: Sequence[float] = DEFAULT_DELTAS, tol: float | None = None,
                        grid_N: int | None = None, jobs: int = 1) -> FlatReport:
    """Audit hypotheses, compute ``H_bar`` at every sample and grade the prediction.

    Raises ``HypothesisError`` before any solve when an audit fails.
    """
    audit = exp.audit()
    if not all(audit.values()):
        bad = [k for k, v in audit.items() if not v]
        raise HypothesisError(f"{exp.name}: hypothesis audit failed: {bad}")
    spec = exp.spec()
    K = exp.coupling
    grid = TorusGrid(exp.dim, grid_N or exp.grid_N)
    tol = exp.solver_tol if tol is None else tol

    def work(P: list[float]) -> FlatRow:
        Pv = np.asarray(P, dtype=float)
        lo = lower_bound(spec, Pv, K)
        up = None
        if exp.subsolution is not None:
            up = upper_certificate(spec, K, Pv, exp.subsolution(Pv, grid), grid)
        target = float(Pv[0] ** 2) if exp.prediction == "stripe" else 0.0
        radius = float(np.linalg.norm(Pv[1:])) if exp.prediction == "stripe" else float(np.linalg.norm(Pv))
        try:
            H, err = effective_at(spec, K, Pv, deltas, tol, grid)
        except NonConvergenceError as exc:
            return FlatRow(list(P), radius, float("nan"), float("nan"), lo, up, target, False, str(exc))
        if exp.prediction == "stripe":
            ok = H >= target - exp.tol
            if radius == 0:
                ok = ok and abs(H - target) <= exp.tol
        else:
            ok = abs(H) <= exp.tol
        if exp.expect_lower_zero:
            ok = ok and abs(lo) <= 1e-12
        return FlatRow(list(P), radius, float(H), float(err), float(lo), up, target, bool(ok))

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as ex:
            rows = list(ex.map(work, exp.P_samples))
    else:
        rows = [work(P) for P in exp.P_samples]
    extra: dict[str, Any] = {}
    if exp.prediction == "stripe":
        on_axis = [r for r in rows if r.radius == 0]
        gamma = _gamma_scan(
            [FlatRow(r.P, r.radius, r.H_bar, r.err_bar, r.lower_cert, r.upper_cert, r.target,
                     bool(abs(r.H_bar - r.target) <= exp.tol)) for r in rows],
            key=lambda r: r.radius)
        extra["on_axis_max_error"] = float(max(abs(r.H_bar - r.target) for r in on_axis))
        extra["min_excess"] = float(min(r.H_bar - r.target for r in rows))
    else:
        gamma = _gamma_scan(rows, key=lambda r: r.radius)
    if exp.gamma_formula is not None and exp.subsolution is not None:
        P = np.full(exp.dim, 0.99 * exp.gamma_formula)
        extra["certificate_at_gamma"] = upper_certificate(spec, K, P, exp.subsolution(P, grid), grid)
    return FlatReport(exp.name, exp.prediction, audit, rows, gamma, exp.gamma_formula,
                      all(r.passed for r in rows), extra)


@dataclass
class CheckEntry:
    name: str
    passed: bool
    skipped: bool = False
    detail: dict[str, Any] = field(default_factory=dict)


@dataclass
class ElementaryReport:
    entries: list[CheckEntry]

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries if not e.skipped)

    def entry(self, name: str) -> CheckEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def to_dict(self) -> dict[str, Any]:
        return {"passed": self.passed, "entries": [asdict(e) for e in self.entries]}


def _collinear_triples(shape: tuple[int, ...]) -> list[tuple[tuple[int, ...], tuple[int, ...], tuple[int, ...]]]:
    """Index triples ``(a, c, b)`` with ``c`` the lattice midpoint of ``a`` and ``b``."""
    dirs = [(1,)] if len(shape) == 1 else [(1, 0), (0, 1), (1, 1), (1, -1)]
    out = []
    for c in np.ndindex(*shape):
        for d in dirs:
            k = 1
            while True:
                a = tuple(ci - k * di for ci, di in zip(c, d))
                b = tuple(ci + k * di for ci, di in zip(c, d))
                if not all(0 <= ai < s and 0 <= bi < s for ai, bi, s in zip(a, b, shape)):
                    break
                out.append((a, c, b))
                k += 1
    return out


def convexity_check(table: EffectiveTable, factor: float = 2.0) -> CheckEntry:
    """Midpoint convexity on every collinear lattice triple, tolerance ``factor * err_bar``."""
    worst = 0.0
    fails = 0
    triples = _collinear_triples(table.H_bar.shape)
    for a, c, b in triples:
        H = table.H_bar
        tol = factor * max(table.err_bar[a], table.err_bar[c], table.err_bar[b]) + 1e-12 * (1.0 + abs(H[c]))
        excess = H[c] - 0.5 * (H[a] + H[b])
        worst = max(worst, excess - tol)
        fails += int(excess > tol)
    return CheckEntry("midpoint_convexity", fails == 0, detail={"triples": len(triples), "violations": fails,
                                                                "worst_excess_over_tol": worst})


def coercivity_check(table: EffectiveTable, tol: float = 0.0) -> CheckEntry:
    """``H_bar`` at every lattice extreme exceeds ``H_bar`` at the half-way point of its ray."""
    pts = table.points()
    H = table.H_bar.ravel()
    extremes = [k for k, p in enumerate(pts)
                if any(p[j] in (table.axes[j][0], table.axes[j][-1]) for j in range(table.dim))]
    half, _ = table.interpolate(0.5 * pts[extremes].T)
    margin = H[extremes] - half
    return CheckEntry("coercivity", bool(np.all(margin > tol)),
                      detail={"rays": len(extremes), "min_margin": float(margin.min())})


def homogeneity_check(table: EffectiveTable, tol: float = 0.05) -> CheckEntry:
    """``H_bar(2P) = 2 H_bar(P)`` wherever both points lie on the lattice."""
    pts = table.points()
    H = table.H_bar.ravel()
    lookup = {tuple(np.round(p, 12)): h for p, h in zip(pts, H)}
    worst = 0.0
    pairs = 0
    for p, h in zip(pts, H):
        q = tuple(np.round(2 * p, 12))
        if q in lookup and np.any(p != 0):
            worst = max(worst, abs(lookup[q] - 2 * h))
            pairs += 1
    return CheckEntry("degree_one_homogeneity", pairs > 0 and worst <= tol,
                      detail={"pairs": pairs, "max_deviation": worst})


def collapse_check(table: EffectiveTable, single: EffectiveTable, tol: float = 1e-12) -> CheckEntry:
    """Coupled table equals the single-equation table when all components coincide."""
    diff = float(np.max(np.abs(table.H_bar - single.H_bar)))
    return CheckEntry("equal_hamiltonian_collapse", diff <= tol, detail={"max_difference": diff})


def max_comparison_check(table: EffectiveTable, max_table: EffectiveTable, tol: float = 0.05) -> CheckEntry:
    """``H_bar <= K_bar + tol`` pointwise, with ``K = max_i H_i``."""
    excess = float(np.max(table.H_bar - max_table.H_bar))
    return CheckEntry("below_max_hamiltonian", excess <= tol, detail={"max_excess": excess})


def run_elementary_checks(table: EffectiveTable, spec: HamiltonianSpec, single_table: EffectiveTable | None = None,
                          max_table: EffectiveTable | None = None) -> ElementaryReport:
    """Structural checks gated by the Hamiltonian family.

    Convexity runs only for convex components, homogeneity only for
    degree-one families, collapse only when all components coincide and a
    single-equation table is supplied; the max comparison needs ``max_table``.
    """
    entries = [coercivity_check(table)]
    if spec.all_convex:
        entries.append(convexity_check(table))
    else:
        entries.append(CheckEntry("midpoint_convexity", True, skipped=True, detail={"reason": "nonconvex"}))
    if spec.homogeneous:
        entries.append(homogeneity_check(table))
    else:
        entries.append(CheckEntry("degree_one_homogeneity", True, skipped=True, detail={"reason": "not homogeneous"}))
    identical = all(c.describe() == spec.components[0].describe() for c in spec.components)
    if identical and single_table is not None:
        entries.append(collapse_check(table, single_table))
    else:
        entries.append(CheckEntry("equal_hamiltonian_collapse", True, skipped=True,
                                  detail={"reason": "components differ" if not identical else "no single table"}))
    if max_table is not None:
        entries.append(max_comparison_check(table, max_table))
    else:
        entries.append(CheckEntry("below_max_hamiltonian", True, skipped=True, detail={"reason": "no max table"}))
    return ElementaryReport(entries)


def companion_tables(spec: HamiltonianSpec, K: CouplingMatrix, axes: Sequence[Sequence[float]], grid: TorusGrid,
                     deltas: Sequence[float] = DEFAULT_DELTAS, tol: float = 1e-6,
                     jobs: int = 1) -> dict[str, EffectiveTable]:
    """Main table plus the single-equation and max-Hamiltonian tables on the same lattice."""
    out = {"table": build_table(spec, K, axes, deltas, tol, grid, jobs)}
    one = CouplingMatrix(np.ones((1, 1)))
    if all(c.describe() == spec.components[0].describe() for c in spec.components):
        single = HamiltonianSpec([spec.components[0]], spec.dim)
        out["single"] = build_table(single, one, axes, deltas, tol, grid, jobs)
    try:
        out["max"] = build_table(spec.max_hamiltonian(), one, axes, deltas, tol, grid, jobs)
    except NotImplementedError:
        pass
    return out


@dataclass
class ComparisonReport:
    trials: int
    violations: int
    worst_gap: float

    @property
    def passed(self) -> bool:
        return self.violations == 0


def comparison_trials(spec: HamiltonianSpec, K: CouplingMatrix, eps: float, grid: TorusGrid, T: float,
                      n_trials: int = 50, seed: int = 0, modes: int = 4) -> ComparisonReport:
    """Ordered random initial data ``f <= g`` must give ordered discrete solutions at all sampled times.

    Data are random trigonometric sums; ``g = f + `` a nonnegative random field.
    """
    rng = np.random.default_rng(seed)
    x = grid.mesh()
    times = [0.5 * T, T]
    violations = 0
    worst = -np.inf

    def rand_field() -> np.ndarray:
        out = np.zeros(grid.shape)
        for _ in range(modes):
            k = rng.integers(1, 4, size=grid.dim)
            ph = rng.random()
            out += rng.normal() * np.cos(2 * np.pi * (np.tensordot(k, x, axes=(0, 0)) + ph)) / modes
        return out

    for _ in range(n_trials):
        f = np.stack([rand_field() for _ in range(spec.m)])
        g = f + np.abs(np.stack([rand_field() for _ in range(spec.m)]))
        pf = EpsSystemProblem(spec, K, eps, grid, f, T)
        pg = EpsSystemProblem(spec, K, eps, grid, g, T)
        # one scheme for both runs: shared theta and time lattice
        R = max(pf.R_grad, pg.R_grad)
        uf = evolve(EpsSystemProblem(spec, K, eps, grid, f, T, R_grad=R), times)
        ug = evolve(EpsSystemProblem(spec, K, eps, grid, g, T, R_grad=R), times)
        gap = max(float(np.max(a.values - b.values)) for a, b in zip(uf, ug))
        worst = max(worst, gap)
        violations += int(gap > 0.0)
    return ComparisonReport(n_trials, violations, float(worst))
