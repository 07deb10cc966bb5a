"""Discounted cell systems, effective Hamiltonian extraction, certificates and tables."""
from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from coupledhj import kernels
from coupledhj.grid import CouplingMatrix, TorusGrid
from coupledhj.hamiltonians import HamiltonianSpec, sample_points
from coupledhj.numerics import numerical_hamiltonian

DEFAULT_DELTAS = (0.08, 0.04, 0.02)


class NonConvergenceError(RuntimeError):
    """Pseudo-time iteration hit its step cap; ``history`` holds ``(steps, residual)`` pairs."""

    def __init__(self, message: str, history: list[tuple[int, float]]) -> None:
        super().__init__(message)
        self.history = history


@dataclass
class CellSolution:
    """Converged discounted cell system at slope ``P`` and discount ``delta``.

    ``values`` has shape ``(m, *grid.shape)``; ``H_bar_estimate`` is
    ``-delta * mean(values)`` and ``spread_constant`` is
    ``max |delta v + H_bar_estimate| / delta``.
    """

    P: np.ndarray
    delta: float
    values: np.ndarray
    residual: float
    H_bar_estimate: float
    grid: TorusGrid
    steps: int
    spread_constant: float
    max_gradient: float
    R_grad: float
    history: list[tuple[int, float]] = field(default_factory=list, repr=False)

    @property
    def gradient_exceeded(self) -> bool:
        return self.max_gradient > self.R_grad

    @property
    def bracket(self) -> tuple[float, float]:
        """``(min, max)`` of ``-delta v``; brackets the discrete effective value."""
        dv = -self.delta * self.values
        return float(dv.min()), float(dv.max())


def _as_vector(P: Any, dim: int) -> np.ndarray:
    P = np.atleast_1d(np.asarray(P, dtype=float))
    if P.shape != (dim,):
        raise ValueError(f"P must have {dim} components")
    return P


def solve_cell_discounted(spec: HamiltonianSpec, K: CouplingMatrix, P: Any, delta: float, tol: float,
                          grid: TorusGrid, flux: str = "llf", R_grad: float | None = None,
                          max_steps: int = 20_000_000, check_every: int = 20_000,
                          w0: np.ndarray | None = None) -> CellSolution:
    """Pseudo-time march of ``H_i(xi, P + Dv_i) + (1 + delta) v_i - sum_j K_ij v_j = 0``.

    The constant mode is advanced in closed form: the march updates a
    mean-free iterate ``w`` by the residual minus its mean and stops when
    ``max |R - mean R| < tol``; the solution is ``v = w - mean(R)/delta``.
    """
    if not 0 < delta <= 1:
        raise ValueError("delta must lie in (0, 1]")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if flux not in ("lf", "llf"):
        raise ValueError("flux must be 'lf' or 'llf'")
    if spec.m != K.m or spec.dim != grid.dim:
        raise ValueError("spec, coupling and grid are inconsistent")
    P = _as_vector(P, grid.dim)
    R_grad = float(R_grad if R_grad is not None else spec.default_R_grad(P))
    kinds, a, V = spec.tabulate(grid.mesh())
    a_max = a.reshape(spec.m, -1).max(axis=1)
    theta = spec.theta(R_grad, a_max)
    Kmat = np.ascontiguousarray(K.matrix)
    dt = 0.9 / (grid.dim * theta / grid.h + 1.0 + delta)
    w = np.zeros((spec.m, *grid.shape)) if w0 is None else np.array(w0, dtype=float)
    w -= w.mean()
    local = flux == "llf"
    history: list[tuple[int, float]] = []
    done = 0
    mean = err = gmax = 0.0
    while done < max_steps:
        n = min(check_every, max_steps - done)
        if grid.dim == 1:
            it, mean, err, gmax = kernels.cell_march_1d(w, kinds, a, V, float(P[0]), Kmat, float(delta),
                                                        grid.h, dt, theta, local, tol, n)
        else:
            it, mean, err, gmax = kernels.cell_march_2d(w, kinds, a, V, float(P[0]), float(P[1]), Kmat, float(delta),
                                                        grid.h, dt, theta, local, tol, n)
        done += it
        history.append((done, float(err)))
        if not np.isfinite(err):
            raise NonConvergenceError(f"cell iteration diverged at P={P.tolist()}, delta={delta}", history)
        if err < tol:
            break
    else:
        raise NonConvergenceError(
            f"cell iteration did not reach tol={tol} in {max_steps} steps at P={P.tolist()}, delta={delta} "
            f"(residual {err:.3g})", history)
    v = w - mean / delta
    H_est = float(-delta * v.mean())
    spread = float(np.max(np.abs(delta * v + H_est)) / delta)
    return CellSolution(P, float(delta), v, float(err), H_est, grid, done, spread, float(gmax), R_grad, history)


@dataclass
class EffectiveEstimate:
    """Extrapolated ``H_bar(P)`` with its error bar and the per-delta solves."""

    P: np.ndarray
    H_bar: float
    error_bar: float
    deltas: np.ndarray
    estimates: np.ndarray
    slope: float
    solutions: list[CellSolution] = field(repr=False)

    @property
    def finest(self) -> CellSolution:
        return self.solutions[-1]

    def __iter__(self):
        yield self.H_bar
        yield self.error_bar


def effective_at(spec: HamiltonianSpec, K: CouplingMatrix, P: Any, delta_sequence: Sequence[float] = DEFAULT_DELTAS,
                 tol: float = 1e-6, grid: TorusGrid | None = None, h_factor: float = 1.0,
                 **solver_kw: Any) -> EffectiveEstimate:
    """Linear extrapolation in ``delta`` of ``H_bar_estimate`` to ``delta = 0``.

    The error bar is the largest deviation of the extrapolated value from the
    two finest estimates plus ``tol``. Solves warm start from the previous
    delta. Unpacks as ``(H_bar, error_bar)``.
    """
    deltas = np.asarray(delta_sequence, dtype=float)
    if deltas.size < 2 or np.any(np.diff(deltas) >= 0):
        raise ValueError("delta_sequence must be strictly decreasing with at least two entries")
    if grid is None:
        raise ValueError("a grid is required")
    if grid.h > deltas[-1] * h_factor * (1 + 1e-12):
        raise ValueError(f"grid too coarse: h={grid.h:.4g} exceeds delta_min*h_factor={deltas[-1] * h_factor:.4g}")
    sols: list[CellSolution] = []
    w0 = None
    for d in deltas:
        s = solve_cell_discounted(spec, K, P, float(d), tol, grid, w0=w0, **solver_kw)
        sols.append(s)
        w0 = s.values - s.values.mean()
    est = np.array([s.H_bar_estimate for s in sols])
    slope, intercept = np.polyfit(deltas, est, 1)
    err = float(max(abs(intercept - est[-1]), abs(intercept - est[-2])) + tol)
    return EffectiveEstimate(_as_vector(P, grid.dim), float(intercept), err, deltas, est, float(slope), sols)


def correctors(solution: CellSolution) -> np.ndarray:
    """Approximate correctors: ``v`` minus its joint mean over components and points."""
    return solution.values - solution.values.mean()


def upper_certificate(spec: HamiltonianSpec, K: CouplingMatrix, P: Any, test_pair: np.ndarray, grid: TorusGrid,
                      scheme: str = "central", theta: float | None = None) -> float:
    """``max_{i, xi} H_i(xi, P + D phi_i) + phi_i - sum_j K_ij phi_j`` for a periodic test pair.

    ``scheme="central"`` uses centred differences (smooth pairs);
    ``scheme="flux"`` uses the Lax-Friedrichs numerical Hamiltonian with
    constant ``theta``.
    """
    P = _as_vector(P, grid.dim)
    phi = np.asarray(test_pair, dtype=float)
    if phi.shape != (spec.m, *grid.shape):
        raise ValueError("test pair must have shape (m, *grid.shape)")
    xi = grid.mesh()
    h = grid.h
    coupling = phi - np.tensordot(K.matrix, phi, axes=(1, 0))
    best = -np.inf
    for i in range(spec.m):
        u = phi[i]
        if scheme == "central":
            p = np.stack([P[k] + (np.roll(u, -1, axis=k) - np.roll(u, 1, axis=k)) / (2 * h) for k in range(grid.dim)])
            H = spec.components[i].eval(xi, p)
        elif scheme == "flux":
            if theta is None:
                raise ValueError("flux scheme needs theta")
            pm = np.stack([P[k] + (u - np.roll(u, 1, axis=k)) / h for k in range(grid.dim)])
            pp = np.stack([P[k] + (np.roll(u, -1, axis=k) - u) / h for k in range(grid.dim)])
            if grid.dim == 1:
                H = numerical_hamiltonian(spec, i, xi[0], pm[0], pp[0], theta)
            else:
                H = numerical_hamiltonian(spec, i, xi, pm, pp, theta)
        else:
            raise ValueError(f"unknown scheme {scheme!r}")
        best = max(best, float(np.max(H + coupling[i])))
    return best


def coercive_lower_bound(spec: HamiltonianSpec, P: Any, n: int | None = None) -> float:
    """``min_{i, xi} H_i(xi, P)`` on a fine torus sample."""
    P = _as_vector(P, spec.dim)
    pts = sample_points(spec.dim, n)
    p = np.broadcast_to(P.reshape(spec.dim, *([1] * spec.dim)), pts.shape)
    return float(min(np.min(c.eval(pts, p)) for c in spec.components))


def potential_sum_applicable(spec: HamiltonianSpec, K: CouplingMatrix | None = None) -> bool:
    """Two separable quadratic components with symmetric unit switching."""
    if spec.m != 2 or spec.form != "separable" or any(c.kind != "quadratic" for c in spec.components):
        return False
    return K is None or np.array_equal(K.matrix, np.array([[0.0, 1.0], [1.0, 0.0]]))


def lower_bound(spec: HamiltonianSpec, P: Any, K: CouplingMatrix | None = None, n: int | None = None) -> float:
    """Best available lower bound on ``H_bar(P)``.

    Always the coercive bound ``min_{i, xi} H_i(xi, P)``; for two separable
    quadratic components also ``-min_xi (V_1 + V_2) / 2``.
    """
    bound = coercive_lower_bound(spec, P, n)
    if potential_sum_applicable(spec, K):
        pts = sample_points(spec.dim, n)
        Vsum = spec.components[0].V(pts) + spec.components[1].V(pts)
        bound = max(bound, -0.5 * float(np.min(Vsum)))
    return bound


@dataclass
class EffectiveTable:
    """``H_bar`` sampled on a regular P-lattice with per-point certificates.

    Array fields have the lattice shape ``tuple(len(ax) for ax in axes)``;
    failed points hold ``nan``.
    """

    axes: list[np.ndarray]
    H_bar: np.ndarray
    err_bar: np.ndarray
    lower_cert: np.ndarray
    upper_cert: np.ndarray
    delta_min: float
    grid_N: int
    failures: dict[str, str] = field(default_factory=dict)
    meta: dict[str, Any] = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def failed(self) -> np.ndarray:
        return ~np.isfinite(self.H_bar)

    def points(self) -> np.ndarray:
        """Lattice points, shape ``(n_points, dim)`` in C order."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def interpolate(self, P: np.ndarray) -> tuple[np.ndarray, int]:
        """Piecewise (bi)linear ``H_bar`` at ``P`` (leading axis = coordinate).

        Queries outside the lattice hull are clamped; returns ``(values, n_clamped)``.
        """
        P = np.asarray(P, dtype=float)
        if np.any(self.failed):
            raise ValueError("cannot interpolate a table with failed points")
        clamped = np.zeros(P.shape[1:], dtype=bool)
        idx, wts = [], []
        for k, ax in enumerate(self.axes):
            x = P[k]
            clamped |= (x < ax[0]) | (x > ax[-1])
            xc = np.clip(x, ax[0], ax[-1])
            j = np.clip(np.searchsorted(ax, xc, side="right") - 1, 0, len(ax) - 2)
            idx.append(j)
            wts.append((xc - ax[j]) / (ax[j + 1] - ax[j]))
        T = self.H_bar
        if self.dim == 1:
            j, w = idx[0], wts[0]
            val = (1 - w) * T[j] + w * T[j + 1]
        else:
            i, j = idx
            w0, w1 = wts
            val = ((1 - w0) * (1 - w1) * T[i, j] + w0 * (1 - w1) * T[i + 1, j]
                   + (1 - w0) * w1 * T[i, j + 1] + w0 * w1 * T[i + 1, j + 1])
        return val, int(np.sum(clamped))

    def max_slope(self) -> np.ndarray:
        """Per-axis maximal absolute slope between adjacent samples."""
        out = []
        for k, ax in enumerate(self.axes):
            d = np.abs(np.diff(self.H_bar, axis=k)) / np.expand_dims(np.diff(ax), tuple(j for j in range(self.dim) if j != k))
            out.append(float(np.max(d)))
        return np.array(out)

    def to_csv(self, path: str | Path) -> None:
        """CSV columns ``P1[, P2], H_bar, err_bar, lower_cert, upper_cert, delta_min, grid_N``."""
        names = [f"P{k + 1}" for k in range(self.dim)]
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(names + ["H_bar", "err_bar", "lower_cert", "upper_cert", "delta_min", "grid_N"])
            for pt, hb, eb, lo, up in zip(self.points(), self.H_bar.ravel(), self.err_bar.ravel(),
                                          self.lower_cert.ravel(), self.upper_cert.ravel()):
                w.writerow([f"{v:.17g}" for v in (*pt, hb, eb, lo, up, self.delta_min)] + [self.grid_N])

    @classmethod
    def from_csv(cls, path: str | Path) -> EffectiveTable:
        with Path(path).open() as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        dim = sum(1 for h in header if h.startswith("P"))
        data = np.array([[float(x) for x in r] for r in body])
        axes = [np.unique(data[:, k]) for k in range(dim)]
        shape = tuple(len(a) for a in axes)
        cols = {name: data[:, dim + j].reshape(shape) for j, name in enumerate(["H_bar", "err_bar", "lower_cert", "upper_cert"])}
        return cls(axes, cols["H_bar"], cols["err_bar"], cols["lower_cert"], cols["upper_cert"],
                   float(data[0, dim + 4]), int(data[0, dim + 5]))


def build_table(spec: HamiltonianSpec, K: CouplingMatrix, axes: Sequence[Sequence[float]],
                delta_sequence: Sequence[float] = DEFAULT_DELTAS, tol: float = 1e-6,
                grid: TorusGrid | None = None, jobs: int = 1, **solver_kw: Any) -> EffectiveTable:
    """``effective_at`` on every lattice point with certificates.

    ``upper_cert`` is the smaller of the constant-pair certificate
    ``max_{i, xi} H_i(xi, P)`` and the discrete bracket ``max(-delta v)`` of
    the finest solve. Failed points are recorded and left as ``nan``.
    """
    axes = [np.asarray(a, dtype=float) for a in axes]
    if grid is None or len(axes) != grid.dim:
        raise ValueError("need a grid matching the lattice dimension")
    if any(a.size == 0 for a in axes):
        raise ValueError("P-lattice is empty")
    shape = tuple(len(a) for a in axes)
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    zero_pair = np.zeros((spec.m, *grid.shape))

    def work(P: np.ndarray) -> tuple[float, float, float, float, str | None]:
        lo = lower_bound(spec, P, K)
        cert0 = upper_certificate(spec, K, P, zero_pair, grid)
        try:
            est = effective_at(spec, K, P, delta_sequence, tol, grid, **solver_kw)
        except (NonConvergenceError, ValueError) as exc:
            return np.nan, np.nan, lo, cert0, str(exc)
        return est.H_bar, est.error_bar, lo, min(cert0, est.finest.bracket[1]), None

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(work, pts))
    else:
        results = [work(P) for P in pts]
    H = np.array([r[0] for r in results]).reshape(shape)
    E = np.array([r[1] for r in results]).reshape(shape)
    L = np.array([r[2] for r in results]).reshape(shape)
    U = np.array([r[3] for r in results]).reshape(shape)
    failures = {",".join(f"{v:g}" for v in P): r[4] for P, r in zip(pts, results) if r[4] is not None}
    return EffectiveTable(axes, H, E, L, U, float(min(delta_sequence)), grid.N, failures)
