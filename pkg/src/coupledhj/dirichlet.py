"""Steady discounted Dirichlet problems on an interval and their effective limit.

The oscillatory system ``u_i + H_i(x/eps, u_i') + (1/eps)(u_i - sum_j K_ij u_j) = 0``
carries data ``g_i`` at both end points in the viscosity sense: end nodes
solve the one-sided (state-constraint) equation and are then capped by ``g_i``.
The effective problem ``u + H_bar(u') = 0`` takes the datum ``min_i g_i``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from coupledhj import kernels
from coupledhj.cell import EffectiveTable, NonConvergenceError
from coupledhj.grid import CouplingMatrix
from coupledhj.hamiltonians import MIN_RADIUS, HamiltonianSpec


@dataclass
class DirichletProblem:
    """Interval ``[a, b]`` with ``N`` cells; ``g_left``/``g_right`` hold one value per component."""

    spec: HamiltonianSpec
    K: CouplingMatrix
    eps: float
    a: float
    b: float
    N: int
    g_left: np.ndarray
    g_right: np.ndarray
    flux: str = "llf"
    R_grad: float | None = None

    def __post_init__(self) -> None:
        if self.spec.dim != 1:
            raise ValueError("Dirichlet problems are implemented on intervals (dim = 1)")
        if self.eps <= 0 or not self.b > self.a or self.N < 2:
            raise ValueError("need eps > 0, b > a and at least one interior point")
        self.g_left = np.broadcast_to(np.asarray(self.g_left, dtype=float), (self.K.m,)).copy()
        self.g_right = np.broadcast_to(np.asarray(self.g_right, dtype=float), (self.K.m,)).copy()
        if not (np.all(np.isfinite(self.g_left)) and np.all(np.isfinite(self.g_right))):
            raise ValueError("boundary data must be finite")
        if self.spec.m != self.K.m:
            raise ValueError("spec and coupling disagree on m")

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.a, self.b, self.N + 1)

    @property
    def h(self) -> float:
        return (self.b - self.a) / self.N

    def bound_M(self) -> float:
        """``max_i (sup |H_i(., 0)| + sup |g_i|)``."""
        pts = self.x[None] / self.eps
        H0 = max(float(np.max(np.abs(c.eval(pts, np.zeros_like(pts))))) for c in self.spec.components)
        return H0 + float(max(np.max(np.abs(self.g_left)), np.max(np.abs(self.g_right))))


@dataclass
class DirichletSolution:
    x: np.ndarray
    values: np.ndarray
    residual: float
    steps: int
    history: list[tuple[int, float]] = field(default_factory=list, repr=False)

    def boundary_attained(self, g_left: Sequence[float], g_right: Sequence[float], tol: float = 1e-8) -> np.ndarray:
        """Per component and end, whether the classical datum is attained."""
        return np.array([[abs(v[0] - gl) <= tol, abs(v[-1] - gr) <= tol]
                         for v, gl, gr in zip(self.values, g_left, g_right)])

    def to_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "component", "value"])
            for i, v in enumerate(self.values):
                for xk, vk in zip(self.x, v):
                    w.writerow([f"{xk:.17g}", i + 1, f"{vk:.17g}"])


def solve_dirichlet_eps(problem: DirichletProblem, tol: float = 1e-9, max_steps: int = 5_000_000,
                        check_every: int = 50_000, u0: np.ndarray | None = None) -> DirichletSolution:
    """Explicit pseudo-time march to the steady state with min-projection at the end nodes."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    spec = problem.spec
    x = problem.x
    kinds, a, V = spec.tabulate(x[None] / problem.eps)
    R_grad = problem.R_grad if problem.R_grad is not None else 4.0 * problem.bound_M() / (problem.b - problem.a) + 4.0
    theta = spec.theta(R_grad, a.max(axis=1))
    inv_eps = 1.0 / problem.eps
    coupling = inv_eps * float(np.max(1.0 - np.diag(problem.K.matrix))) if problem.K.m > 1 else 0.0
    dt = 0.9 / (theta / problem.h + 1.0 + coupling)
    rstar = np.array([MIN_RADIUS[c.kind] for c in spec.components])
    M = problem.bound_M()
    u = np.zeros((spec.m, problem.N + 1)) if u0 is None else np.array(u0, dtype=float)
    u = np.clip(u, -M, M)
    history: list[tuple[int, float]] = []
    done = 0
    err = np.inf
    while done < max_steps:
        it, err = kernels.dirichlet_march_1d(u, kinds, a, V, rstar, np.ascontiguousarray(problem.K.matrix), inv_eps,
                                             problem.h, dt, theta, problem.flux == "llf",
                                             problem.g_left, problem.g_right, tol, min(check_every, max_steps - done))
        done += it
        history.append((done, float(err)))
        if not np.isfinite(err):
            raise NonConvergenceError("Dirichlet iteration diverged", history)
        if err < tol:
            return DirichletSolution(x, u, float(err), done, history)
    raise NonConvergenceError(f"Dirichlet iteration did not reach tol={tol} in {max_steps} steps", history)


def effective_datum(g: Any) -> float:
    """Effective boundary value ``min_i g_i``."""
    return float(np.min(np.asarray(g, dtype=float)))


def _one_sided_min(table: EffectiveTable) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    P = table.axes[0]
    H = table.H_bar
    return P, np.minimum.accumulate(H), np.minimum.accumulate(H[::-1])[::-1]


def solve_dirichlet_effective(table: EffectiveTable, a: float, b: float, N: int, gbar_left: float, gbar_right: float,
                              tol: float = 1e-9, max_steps: int = 5_000_000) -> DirichletSolution:
    """March ``u + H_bar(u') = 0`` with data ``gbar`` using the interpolated table.

    End nodes use ``min_{s <= p+} H_bar(s)`` (left) and ``min_{s >= p-} H_bar(s)``
    (right), exact for the piecewise-linear interpolant, then ``u <- min(u, gbar)``.
    """
    if table.dim != 1:
        raise ValueError("effective Dirichlet solver needs a 1D table")
    x = np.linspace(a, b, N + 1)
    h = (b - a) / N
    theta = float(table.max_slope()[0])
    dt = 0.9 / (theta / h + 1.0)
    P, pre, suf = _one_sided_min(table)
    Hb = table.H_bar

    def H(p: np.ndarray) -> np.ndarray:
        return np.interp(p, P, Hb)

    u = np.zeros(N + 1)
    err = np.inf
    history: list[tuple[int, float]] = []
    for it in range(1, max_steps + 1):
        dm = np.diff(u) / h
        R = np.empty_like(u)
        R[1:-1] = H(0.5 * (dm[:-1] + dm[1:])) - 0.5 * theta * (dm[1:] - dm[:-1])
        pp = dm[0]
        j = np.searchsorted(P, pp, side="right") - 1
        R[0] = min(H(pp), pre[j]) if j >= 0 else H(pp)
        pm = dm[-1]
        j = np.searchsorted(P, pm, side="left")
        R[-1] = min(H(pm), suf[j]) if j < len(P) else H(pm)
        new = u - dt * (u + R)
        new[0] = min(new[0], gbar_left)
        new[-1] = min(new[-1], gbar_right)
        err = float(np.max(np.abs(new - u)) / dt)
        u = new
        if it % 10_000 == 0:
            history.append((it, err))
        if err < tol:
            return DirichletSolution(x, u[None], err, it, history)
    raise NonConvergenceError(f"effective Dirichlet iteration did not reach tol={tol}", history)
