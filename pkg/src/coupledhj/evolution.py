"""Time-dependent oscillatory coupled system with exact switching substeps.

Solves ``u_i,t + H_i(x/eps, Du_i) + (1/eps)(u_i - sum_j K_ij u_j) = 0`` on the
unit torus by Lie splitting: an explicit monotone Hamiltonian step followed
by the exact propagator ``exp(dt (K - I)/eps)`` at every gridpoint.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np

from coupledhj.expm import coupling_propagator
from coupledhj.grid import CouplingMatrix, StateField, TorusGrid
from coupledhj.hamiltonians import MIN_RADIUS, HamiltonianSpec, profile
from coupledhj.numerics import GridOperator


class CFLError(ValueError):
    """Time step above the explicit stability limit."""

    def __init__(self, dt: float, dt_max: float) -> None:
        super().__init__(f"dt={dt:.6g} exceeds the CFL limit; need dt <= {dt_max:.6g}")
        self.dt = dt
        self.dt_max = dt_max


def discrete_lipschitz(f: np.ndarray, h: float) -> float:
    """Max Euclidean norm of the forward-difference gradient of a periodic grid function."""
    f = np.asarray(f, dtype=float)
    g2 = sum(((np.roll(f, -1, axis=k) - f) / h) ** 2 for k in range(f.ndim))
    return float(np.sqrt(np.max(g2)))


def check_periodic_scale(eps: float) -> None:
    """``x/eps`` is periodic on the unit torus only when ``1/eps`` is an integer."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    inv = 1.0 / eps
    if abs(inv - round(inv)) > 1e-9 * inv:
        raise ValueError(f"1/eps must be an integer for the fast variable to be periodic, got eps={eps}")


@lru_cache(maxsize=64)
def _propagator_cached(K_bytes: bytes, m: int, dt: float, eps: float) -> np.ndarray:
    K = np.frombuffer(K_bytes, dtype=float).reshape(m, m)
    E = coupling_propagator(K, dt, eps)
    E.setflags(write=False)
    return E


def propagator(K: CouplingMatrix, dt: float, eps: float) -> np.ndarray:
    return _propagator_cached(K.matrix.tobytes(), K.m, float(dt), float(eps))


def apply_coupling(E: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Apply the ``m x m`` propagator to the component vector at every gridpoint."""
    return np.tensordot(E, u, axes=(1, 0))


@dataclass
class EpsSystemProblem:
    """Oscillatory coupled Cauchy problem on the torus.

    Parameters
    ----------
    spec, K, eps : Hamiltonians, coupling and fast scale.
    grid : TorusGrid
    f : ndarray, shape ``(m, *grid.shape)``
        Initial data.
    T : float
        Horizon.
    flux : {"llf", "lf"}
        Local or global Lax-Friedrichs flux.
    R_grad : float, optional
        Gradient range used for the CFL constant; defaults to
        ``2 * sum_i Lip(f_i) + 1``.
    """

    spec: HamiltonianSpec
    K: CouplingMatrix
    eps: float
    grid: TorusGrid
    f: np.ndarray
    T: float
    flux: str = "llf"
    R_grad: float | None = None
    op: GridOperator = field(init=False, repr=False)

    def __post_init__(self) -> None:
        check_periodic_scale(self.eps)
        if self.T <= 0:
            raise ValueError("horizon T must be positive")
        if self.spec.m != self.K.m:
            raise ValueError("spec and coupling matrix disagree on m")
        self.f = np.asarray(self.f, dtype=float)
        if self.f.shape != (self.K.m, *self.grid.shape) or not np.all(np.isfinite(self.f)):
            raise ValueError("initial data must be finite with shape (m, *grid.shape)")
        if self.spec.dim != self.grid.dim:
            raise ValueError("spec and grid dimensions differ")
        self.lipschitz = [discrete_lipschitz(fi, self.grid.h) for fi in self.f]
        if self.R_grad is None:
            self.R_grad = 2.0 * sum(self.lipschitz) + 1.0
        xi = self.grid.mesh() / self.eps
        _, a, _ = self.spec.tabulate(xi)
        a_max = a.reshape(self.spec.m, -1).max(axis=1)
        self.theta = self.spec.theta(self.R_grad, a_max)
        self.op = GridOperator.build(self.spec, xi, self.grid.h, self.theta, self.flux)
        self.max_gradient = 0.0

    @property
    def m(self) -> int:
        return self.K.m

    @property
    def dt_max(self) -> float:
        """CFL limit ``h / (2 n theta)`` of the Hamiltonian substep."""
        if self.theta == 0:
            return np.inf
        return self.grid.h / (2.0 * self.grid.dim * self.theta)

    def initial_state(self) -> StateField:
        return StateField(self.grid, self.f.copy(), 0.0)


def step(problem: EpsSystemProblem, state: StateField, dt: float) -> StateField:
    """One Lie-split step: monotone Hamiltonian update, then exact coupling."""
    if dt > problem.dt_max * (1.0 + 1e-12):
        raise CFLError(dt, problem.dt_max)
    Hn, g = problem.op.apply(state.values)
    problem.max_gradient = max(problem.max_gradient, g)
    u = state.values - dt * Hn
    u = apply_coupling(propagator(problem.K, dt, problem.eps), u)
    return StateField(state.grid, u, state.time + dt)


def time_lattice(problem: EpsSystemProblem, cfl: float = 0.9) -> tuple[float, int]:
    """Base step ``dt0 = T / n`` with the smallest ``n`` keeping ``dt0 <= cfl * dt_max``."""
    n = max(1, int(np.ceil(problem.T / (cfl * problem.dt_max)))) if np.isfinite(problem.dt_max) else 1
    return problem.T / n, n


def evolve(problem: EpsSystemProblem, sample_times: Sequence[float], cfl: float = 0.9) -> list[StateField]:
    """Snapshots at ``sample_times``.

    The march follows the fixed lattice ``k * T / n``; a sample time off the
    lattice is reached by one truncated side step from the preceding lattice
    level, so the main trajectory never depends on the requested times.
    """
    times = np.asarray(sample_times, dtype=float)
    if np.any(np.diff(times) < 0) or (len(times) and (times[0] < 0 or times[-1] > problem.T * (1 + 1e-12))):
        raise ValueError("sample times must be increasing within [0, T]")
    dt0, n = time_lattice(problem, cfl)
    out: list[StateField] = []
    state = problem.initial_state()
    k = 0
    for t in times:
        target = min(int(np.floor(t / dt0 + 1e-9)), n)
        while k < target:
            state = step(problem, state, dt0)
            k += 1
            state.time = k * dt0
        rest = t - k * dt0
        if rest > 1e-12 * max(1.0, problem.T):
            snap = step(problem, state, rest)
        else:
            snap = state.copy()
        snap.time = float(t)
        out.append(snap)
    return out


@dataclass
class BarrierPair:
    """Sub- and supersolution trajectories ``e^{t(K-I)/eps} f -/+ C t``."""

    times: np.ndarray
    lower: list[StateField]
    upper: list[StateField]
    C: float
    r: float


def barrier_constant(spec: HamiltonianSpec, xi: np.ndarray, r: float, n_radii: int = 65) -> float:
    """``max_i max_{xi, |p| <= r} |H_i(xi, p)|`` on grid points and a radial lattice.

    Every registered profile depends on ``|p|`` only, so a radial lattice
    (with the profile's minimizing radius added) covers the momentum ball.
    """
    kinds, a, V = spec.tabulate(xi)
    C = 0.0
    for i, c in enumerate(spec.components):
        radii = np.linspace(0.0, r, n_radii)
        if MIN_RADIUS[c.kind] <= r:
            radii = np.append(radii, MIN_RADIUS[c.kind])
        F = profile(c.kind, radii)
        ai = a[i].reshape(-1, 1)
        Vi = V[i].reshape(-1, 1)
        C = max(C, float(np.max(np.abs(ai * F[None, :] - Vi))))
    return C


def build_barriers(problem: EpsSystemProblem, times: Sequence[float] | None = None, C: float | None = None) -> BarrierPair:
    """Barrier functions of the coupled system at ``times``.

    ``C`` defaults to :func:`barrier_constant` with ``r = sum_i Lip(f_i)``; it
    can be overridden to probe the sandwich check.
    """
    times = np.asarray([0.0, problem.T] if times is None else times, dtype=float)
    r = float(sum(problem.lipschitz))
    if C is None:
        C = barrier_constant(problem.spec, problem.grid.mesh() / problem.eps, r)
    lower, upper = [], []
    for t in times:
        E = coupling_propagator(problem.K.matrix, float(t), problem.eps)
        base = apply_coupling(E, problem.f)
        lower.append(StateField(problem.grid, base - C * t, float(t)))
        upper.append(StateField(problem.grid, base + C * t, float(t)))
    return BarrierPair(times, lower, upper, float(C), r)


@dataclass
class SandwichReport:
    max_violation_lower: float
    max_violation_upper: float
    n_violations: int
    slack: float
    C: float

    @property
    def passed(self) -> bool:
        return self.n_violations == 0


def check_sandwich(problem: EpsSystemProblem, run: Sequence[StateField], barriers: BarrierPair, slack: float) -> SandwichReport:
    """Count points violating ``lower - slack <= u <= upper + slack``."""
    if len(run) != len(barriers.lower):
        raise ValueError("run and barriers have different numbers of time levels")
    lo_v, up_v, count = 0.0, 0.0, 0
    for u, lo, up in zip(run, barriers.lower, barriers.upper):
        if abs(u.time - lo.time) > 1e-12:
            raise ValueError("run and barrier times differ")
        d_lo = lo.values - slack - u.values
        d_up = u.values - up.values - slack
        lo_v = max(lo_v, float(np.max(d_lo)))
        up_v = max(up_v, float(np.max(d_up)))
        count += int(np.sum(d_lo > 0) + np.sum(d_up > 0))
    return SandwichReport(lo_v, up_v, count, float(slack), barriers.C)


def write_snapshots_csv(path: str | Path, snapshots: Sequence[StateField]) -> None:
    """CSV with columns ``t, x[, y], component, value``."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        dim = snapshots[0].grid.dim if snapshots else 1
        w.writerow(["t", "x"] + (["y"] if dim == 2 else []) + ["component", "value"])
        for s in snapshots:
            pts = s.grid.mesh().reshape(dim, -1)
            for i in range(s.m):
                vals = s.values[i].reshape(-1)
                for k in range(vals.size):
                    w.writerow([f"{s.time:.17g}"] + [f"{c:.17g}" for c in pts[:, k]] + [i + 1, f"{vals[k]:.17g}"])
