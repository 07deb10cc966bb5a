"""Monte Carlo estimators for switching control problems.

Paths are advanced on a ``dt`` lattice: positions by piecewise-constant
velocities, the switching state by the exact one-step transition matrix
``exp(dt (K - I)/eps)``. Random numbers come from counter-based Philox
streams, one per fixed block of paths, and block sums are reduced in block
order so estimates do not depend on how blocks are scheduled.
"""
from __future__ import annotations

import csv
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol, Sequence

import numpy as np

from coupledhj.evolution import EpsSystemProblem, evolve
from coupledhj.expm import coupling_propagator
from coupledhj.grid import CouplingMatrix, StateField
from coupledhj.hamiltonians import INF_SENTINEL, HamiltonianSpec

BLOCK = 4096


@dataclass(frozen=True)
class SwitchingChainSpec:
    """Continuous-time chain leaving state ``i`` at rate ``(1 - K_ii)/eps`` and jumping by ``K``."""

    K: CouplingMatrix
    eps: float
    seed: int = 0

    def __post_init__(self) -> None:
        if self.eps <= 0:
            raise ValueError("eps must be positive")

    @classmethod
    def two_state(cls, c1: float, c2: float, eps: float, seed: int = 0) -> SwitchingChainSpec:
        return cls(CouplingMatrix.from_rates(c1, c2), eps, seed)

    @property
    def m(self) -> int:
        return self.K.m

    @property
    def rates(self) -> np.ndarray:
        """Exit rate of every state, ``c_i / eps``."""
        return self.K.rates / self.eps

    def transition(self, dt: float) -> np.ndarray:
        return coupling_propagator(self.K.matrix, dt, self.eps)

    def stream(self, tag: str, block: int) -> np.random.Generator:
        """Independent generator for ``(tag, block)`` derived from the master seed."""
        key = zlib.crc32(tag.encode())
        return np.random.Generator(np.random.Philox(np.random.SeedSequence(self.seed, spawn_key=(key, block))))


@dataclass
class ChainSample:
    """Exact jump times plus the state on the ``dt`` lattice."""

    first_jump: np.ndarray
    jump_counts: np.ndarray
    states: np.ndarray | None
    dt: float
    horizon: float


def _blocks(n: int) -> list[tuple[int, int]]:
    return [(b, min(BLOCK, n - b * BLOCK)) for b in range((n + BLOCK - 1) // BLOCK)]


def sample_chain(chain: SwitchingChainSpec, horizon: float, dt: float, n_paths: int = 1, start: int = 0,
                 lattice: bool = True, tag: str = "chain") -> ChainSample:
    """Exponential-clock simulation of ``n_paths`` chains started in ``start``.

    The holding time in state ``i`` is exponential with rate ``c_i/eps``; the
    next state is drawn from row ``i`` of ``K`` without the diagonal. States
    are also reported on the lattice ``k dt`` when ``lattice`` is set.
    """
    rates = chain.rates
    if dt > 0.1 / float(np.max(rates)) * (1 + 1e-12):
        raise ValueError(f"dt={dt} too coarse; need dt <= 0.1 eps / max c_i = {0.1 / np.max(rates):.4g}")
    K = chain.K.matrix
    off = K - np.diag(np.diag(K))
    with np.errstate(invalid="ignore", divide="ignore"):
        jump_cum = np.cumsum(off / off.sum(axis=1, keepdims=True), axis=1)
    n_lat = int(round(horizon / dt))
    first, counts, states = [], [], []
    for b, n in _blocks(n_paths):
        rng = chain.stream(tag, b)
        state = np.full(n, start, dtype=np.int64)
        t = np.zeros(n)
        fj = np.full(n, np.inf)
        cnt = np.zeros(n, dtype=np.int64)
        lat = np.full((n, n_lat + 1), -1, dtype=np.int64) if lattice else None
        if lattice:
            lat[:, 0] = start
        active = np.ones(n, dtype=bool)
        while np.any(active):
            idx = np.flatnonzero(active)
            r = rates[state[idx]]
            hold = np.where(r > 0, rng.exponential(1.0, idx.size) / np.where(r > 0, r, 1.0), np.inf)
            u = rng.random(idx.size)
            tj = t[idx] + hold
            jumped = tj <= horizon
            j = idx[jumped]
            new = (u[jumped, None] > jump_cum[state[j]]).sum(axis=1)
            fj[j] = np.where(cnt[j] == 0, tj[jumped], fj[j])
            cnt[j] += 1
            state[j] = new
            t[j] = tj[jumped]
            if lattice:
                k = np.ceil(tj[jumped] / dt - 1e-12).astype(np.int64)
                ok = k <= n_lat
                lat[j[ok], k[ok]] = new[ok]
            active[idx[~jumped]] = False
        if lattice:
            pos = np.where(lat >= 0, np.arange(n_lat + 1)[None, :], 0)
            np.maximum.accumulate(pos, axis=1, out=pos)
            states.append(np.take_along_axis(lat, pos, axis=1))
        first.append(fj)
        counts.append(cnt)
    return ChainSample(np.concatenate(first), np.concatenate(counts),
                       np.concatenate(states) if lattice else None, dt, horizon)


class Policy(Protocol):
    def velocity(self, state: np.ndarray, eta: np.ndarray, s: float) -> np.ndarray: ...


@dataclass
class ConstantPolicy:
    """Open-loop velocity ``velocities[state]`` (shape ``(m, dim)``), optionally saturated."""

    velocities: np.ndarray
    spec: HamiltonianSpec | None = None
    eps: float = 1.0

    def velocity(self, state: np.ndarray, eta: np.ndarray, s: float) -> np.ndarray:
        v = np.asarray(self.velocities, dtype=float)[state]
        if self.spec is not None:
            v = saturate(self.spec, state, eta / self.eps, v)
        return v


def saturate(spec: HamiltonianSpec, state: np.ndarray, xi: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Scale velocities into the finite-cost ball of indicator-type Lagrangians."""
    out = v.copy()
    for c, comp in enumerate(spec.components):
        mask = state == c
        if not np.any(mask) or comp.kind not in ("abs", "zero"):
            continue
        speed = comp.a(xi[mask].T) if comp.kind == "abs" else np.zeros(int(mask.sum()))
        norm = np.linalg.norm(v[mask], axis=1)
        scale = np.where(norm > speed, speed / np.where(norm > 0, norm, 1.0), 1.0)
        out[mask] = v[mask] * scale[:, None]
    return out


@dataclass
class PDEValue:
    """Periodic interpolation of coupled-system snapshots ``u_i(x, tau)``."""

    snapshots: list[StateField]

    def __post_init__(self) -> None:
        self.times = np.array([s.time for s in self.snapshots])
        g = self.snapshots[0].grid
        if g.dim != 1:
            raise ValueError("PDE interpolation is implemented in 1D")
        self.N = g.N
        self.h = g.h
        self.grads = [(np.roll(s.values, -1, axis=1) - np.roll(s.values, 1, axis=1)) / (2 * g.h) for s in self.snapshots]

    def _index(self, tau: float) -> int:
        k = int(np.argmin(np.abs(self.times - tau)))
        if abs(self.times[k] - tau) > 1e-9:
            raise ValueError(f"no snapshot at tau={tau}")
        return k

    def _interp(self, arr: np.ndarray, state: np.ndarray, x: np.ndarray) -> np.ndarray:
        s = np.mod(x, 1.0) * self.N
        i0 = np.floor(s).astype(np.int64) % self.N
        w = s - np.floor(s)
        return (1 - w) * arr[state, i0] + w * arr[state, (i0 + 1) % self.N]

    def value(self, state: np.ndarray, x: np.ndarray, tau: float) -> np.ndarray:
        return self._interp(self.snapshots[self._index(tau)].values, state, x)

    def gradient(self, state: np.ndarray, x: np.ndarray, tau: float) -> np.ndarray:
        return self._interp(self.grads[self._index(tau)], state, x)


@dataclass
class FeedbackPolicy:
    """``eta' = -D_p H_state(eta/eps, Du_state(eta, t - s))`` from stored PDE snapshots (1D)."""

    spec: HamiltonianSpec
    pde: PDEValue
    t: float
    eps: float

    def velocity(self, state: np.ndarray, eta: np.ndarray, s: float) -> np.ndarray:
        x = eta[:, 0]
        p = self.pde.gradient(state, x, self.t - s)
        v = np.zeros_like(eta)
        for c, comp in enumerate(self.spec.components):
            mask = state == c
            if np.any(mask):
                v[mask, 0] = -comp.grad_p((x[mask] / self.eps)[None], p[mask][None])[0]
        return v


@dataclass
class ExitPolicy:
    """Move toward one end at the largest admissible speed; exit there only in ``exit_states``."""

    spec: HamiltonianSpec
    eps: float
    side: str
    exit_states: Sequence[int]

    def velocity(self, state: np.ndarray, eta: np.ndarray, s: float) -> np.ndarray:
        sign = -1.0 if self.side == "left" else 1.0
        v = np.full_like(eta, sign * 1e6)
        return saturate(self.spec, state, eta / self.eps, v)

    def exits(self, state: np.ndarray, at_left: np.ndarray, at_right: np.ndarray) -> np.ndarray:
        at = at_left if self.side == "left" else at_right
        return at & np.isin(state, list(self.exit_states))


@dataclass
class NeverExitPolicy:
    """Stay put forever."""

    def velocity(self, state: np.ndarray, eta: np.ndarray, s: float) -> np.ndarray:
        return np.zeros_like(eta)

    def exits(self, state: np.ndarray, at_left: np.ndarray, at_right: np.ndarray) -> np.ndarray:
        return np.zeros_like(state, dtype=bool)


@dataclass
class MCEstimate:
    estimate: float
    std_error: float
    paths: int
    discarded: int
    extra: dict = field(default_factory=dict)

    @property
    def discard_rate(self) -> float:
        return self.discarded / self.paths if self.paths else 0.0


def _reduce(block_stats: list[tuple[float, float, int]], n_total: int, discarded: int) -> MCEstimate:
    s = sum(b[0] for b in block_stats)
    s2 = sum(b[1] for b in block_stats)
    n = sum(b[2] for b in block_stats)
    if n == 0:
        return MCEstimate(float("inf"), float("inf"), n_total, discarded)
    mean = s / n
    var = max(s2 / n - mean * mean, 0.0) * n / max(n - 1, 1)
    return MCEstimate(float(mean), float(np.sqrt(var / n)), n_total, discarded)


def _lagrangian(spec: HamiltonianSpec, state: np.ndarray, xi: np.ndarray, q: np.ndarray) -> np.ndarray:
    L = np.empty(state.shape[0])
    for c, comp in enumerate(spec.components):
        mask = state == c
        if np.any(mask):
            L[mask] = comp.lagrangian(xi[mask].T, q[mask].T)
    return L


def _step_states(rng: np.random.Generator, cum: np.ndarray, state: np.ndarray) -> np.ndarray:
    u = rng.random(state.shape[0])
    return np.minimum((u[:, None] > cum[state]).sum(axis=1), cum.shape[1] - 1)


def run_cauchy_paths(spec: HamiltonianSpec, chain: SwitchingChainSpec, x: np.ndarray, t: float, start: int,
                     policy: Policy, terminal: Callable[[np.ndarray, np.ndarray, float], np.ndarray],
                     n_paths: int, dt: float, tag: str, s0: float = 0.0) -> MCEstimate:
    """Average of ``int_0^t L(eta/eps, -eta') ds + terminal(state, eta)`` over controlled paths."""
    n_steps = int(round(t / dt))
    if abs(n_steps * dt - t) > 1e-9:
        raise ValueError("t must be a multiple of dt")
    cum = np.cumsum(chain.transition(dt), axis=1)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    stats = []
    discarded = 0
    for b, n in _blocks(n_paths):
        rng = chain.stream(tag, b)
        eta = np.tile(x, (n, 1))
        state = np.full(n, start, dtype=np.int64)
        cost = np.zeros(n)
        for k in range(n_steps):
            s = s0 + k * dt
            v = policy.velocity(state, eta, s)
            cost += _lagrangian(spec, state, eta / chain.eps, -v) * dt
            eta = eta + v * dt
            state = _step_states(rng, cum, state)
        cost += terminal(state, eta, s0 + t)
        bad = cost >= 0.5 * INF_SENTINEL * dt
        discarded += int(bad.sum())
        c = cost[~bad]
        stats.append((float(c.sum()), float((c * c).sum()), int(c.size)))
    return _reduce(stats, n_paths, discarded)


def terminal_from_data(f: Sequence[Callable[[np.ndarray], np.ndarray]]) -> Callable:
    """Terminal cost ``f_state(eta)`` from per-component callables on points with leading axis ``dim``."""

    def term(state: np.ndarray, eta: np.ndarray, s: float) -> np.ndarray:
        out = np.empty(state.shape[0])
        for c, fc in enumerate(f):
            mask = state == c
            if np.any(mask):
                out[mask] = fc(eta[mask].T)
        return out

    return term


def mc_value_cauchy(spec: HamiltonianSpec, chain: SwitchingChainSpec, x: float | np.ndarray, t: float,
                    f: Sequence[Callable[[np.ndarray], np.ndarray]], policy: Policy, paths: int,
                    dt: float | None = None, start: int = 0, tag: str = "cauchy") -> MCEstimate:
    """Upper estimate of ``u_start(x, t)`` under ``policy``; infinite-cost paths are discarded and counted."""
    if not spec.all_convex:
        raise ValueError("Monte Carlo representation needs convex Hamiltonians")
    dt = dt or min(0.1 * chain.eps, t / 100.0)
    return run_cauchy_paths(spec, chain, x, t, start, policy, terminal_from_data(f), paths, dt, tag)


def mc_value_dirichlet(spec: HamiltonianSpec, chain: SwitchingChainSpec, x: float, g_left: Sequence[float],
                       g_right: Sequence[float], domain: tuple[float, float], policy, paths: int,
                       dt: float | None = None, horizon_cap: float = 30.0, start: int = 0,
                       tag: str = "dirichlet") -> MCEstimate:
    """Upper estimate of the discounted exit-time value on an interval (1D).

    The running cost is discounted by ``e^{-s}`` and integrated exactly over
    every step; paths not exited by ``horizon_cap`` contribute no terminal
    cost (the stay-forever option). Positions are clipped to the interval.
    """
    if spec.dim != 1:
        raise ValueError("Dirichlet Monte Carlo is implemented on intervals")
    a, b = domain
    dt = dt or 0.1 * chain.eps
    n_steps = int(np.ceil(horizon_cap / dt))
    cum = np.cumsum(chain.transition(dt), axis=1)
    gl = np.asarray(g_left, dtype=float)
    gr = np.asarray(g_right, dtype=float)
    w = 1.0 - np.exp(-dt)
    tol = 1e-12 * max(1.0, b - a)
    stats = []
    discarded = 0
    for bl, n in _blocks(paths):
        rng = chain.stream(tag, bl)
        eta = np.full((n, 1), float(x))
        state = np.full(n, start, dtype=np.int64)
        cost = np.zeros(n)
        alive = np.ones(n, dtype=bool)
        for k in range(n_steps):
            s = k * dt
            at_l = eta[:, 0] <= a + tol
            at_r = eta[:, 0] >= b - tol
            ex = alive & policy.exits(state, at_l, at_r)
            if np.any(ex):
                g = np.where(at_l[ex], gl[state[ex]], gr[state[ex]])
                cost[ex] += np.exp(-s) * g
                alive &= ~ex
            if not np.any(alive):
                break
            idx = np.flatnonzero(alive)
            v = policy.velocity(state[idx], eta[idx], s)
            new = np.clip(eta[idx] + v * dt, a, b)
            q = -(new - eta[idx]) / dt
            cost[idx] += np.exp(-s) * w * _lagrangian(spec, state[idx], eta[idx] / chain.eps, q)
            eta[idx] = new
            state = _step_states(rng, cum, state)
        bad = cost >= 1e-3 * INF_SENTINEL
        discarded += int(bad.sum())
        c = cost[~bad]
        stats.append((float(c.sum()), float((c * c).sum()), int(c.size)))
    return _reduce(stats, paths, discarded)


def best_constant_velocity(spec: HamiltonianSpec, chain: SwitchingChainSpec, x: float, t: float,
                           f: Sequence[Callable[[np.ndarray], np.ndarray]], lattice: np.ndarray, paths: int,
                           dt: float, start: int = 0, tag: str = "open-loop") -> tuple[float, MCEstimate]:
    """Open-loop search: the same constant velocity in every state, minimised over ``lattice`` (1D)."""
    best: tuple[float, MCEstimate] | None = None
    term = terminal_from_data(f)
    for v in np.asarray(lattice, dtype=float):
        pol = ConstantPolicy(np.full((spec.m, 1), v))
        est = run_cauchy_paths(spec, chain, [x], t, start, pol, term, paths, dt, tag)
        if best is None or est.estimate < best[1].estimate:
            best = (float(v), est)
    return best


def hopf_lax_value(f: Callable[[np.ndarray], np.ndarray], x: float, t: float, a: float = 1.0,
                   radius: float | None = None, n: int = 200_001) -> float:
    """``min_y f(y) + |x - y|^2 / (4 a t)`` for ``H = a |p|^2`` in 1D on a fine ``y`` lattice."""
    radius = radius if radius is not None else 4.0 * np.sqrt(a * t) + 1.0
    y = np.linspace(x - radius, x + radius, n)
    return float(np.min(f(y[None]) + (x - y) ** 2 / (4.0 * a * t)))


@dataclass
class DPPReport:
    one_shot: MCEstimate
    nested: MCEstimate
    tolerance: float
    pde_value: float

    @property
    def difference(self) -> float:
        return self.one_shot.estimate - self.nested.estimate

    @property
    def passed(self) -> bool:
        return abs(self.difference) <= self.tolerance


def pde_reference(spec: HamiltonianSpec, chain: SwitchingChainSpec, f: Sequence[Callable], t: float, dt: float,
                  N: int = 256) -> tuple[PDEValue, float]:
    """Coupled solve on the torus with snapshots at every ``k dt`` in ``[0, t]``; returns ``(values, h)``."""
    from coupledhj.grid import TorusGrid

    grid = TorusGrid(1, N)
    fa = np.stack([fc(grid.mesh()) for fc in f])
    prob = EpsSystemProblem(spec, chain.K, chain.eps, grid, fa, t)
    times = np.round(np.arange(int(round(t / dt)) + 1) * dt, 12)
    times[-1] = t
    return PDEValue(evolve(prob, times)), grid.h


def check_dpp(spec: HamiltonianSpec, chain: SwitchingChainSpec, x: float, t: float, h_split: float, paths: int,
              f: Sequence[Callable], dt: float = 0.01, N: int = 256, start: int = 0,
              pde: tuple[PDEValue, float] | None = None) -> DPPReport:
    """Compare the one-shot estimate with the estimate stopped at ``h_split`` plus PDE values.

    Both use the PDE feedback policy. Tolerance is three combined standard
    errors plus five grid spacings.
    """
    if not 0 <= h_split <= t:
        raise ValueError("need 0 <= h_split <= t")
    pde_val, h = pde or pde_reference(spec, chain, f, t, dt, N)
    policy = FeedbackPolicy(spec, pde_val, t, chain.eps)
    one = run_cauchy_paths(spec, chain, [x], t, start, policy, terminal_from_data(f), paths, dt, "dpp-one")
    if h_split == 0:
        nested = one
    else:
        def plug(state, eta, s):
            return pde_val.value(state, eta[:, 0], t - h_split)

        nested = run_cauchy_paths(spec, chain, [x], h_split, start, policy, plug, paths, dt, "dpp-nested")
    tol = 3.0 * float(np.hypot(one.std_error, nested.std_error)) + 5.0 * h
    u0 = float(pde_val.value(np.array([start]), np.array([x]), t)[0])
    return DPPReport(one, nested, tol, u0)


def mc_effective_estimate(spec: HamiltonianSpec, chain: SwitchingChainSpec, P: float | np.ndarray, horizon: float = 20.0,
                          n_vel: int = 41, v_radius: float | None = None, paths: int = 128,
                          final_paths: int = 2048, dt: float = 0.05, sweeps: int = 2) -> MCEstimate:
    """``-(1/t) min E[int_0^t (-P.eta' + L_state(eta, -eta')) ds]`` over per-state constant velocities.

    The search runs coordinate sweeps over a velocity lattice on one pilot
    stream (common random numbers); the chosen controls are re-evaluated on
    fresh streams. Indicator-type Lagrangians are handled by saturation.
    Experimental: no tight tolerance is implied.
    """
    P = np.atleast_1d(np.asarray(P, dtype=float))
    dim = spec.dim
    if dim != 1:
        raise ValueError("velocity lattice search is implemented in 1D")
    R = v_radius or 2.0 * float(np.linalg.norm(P)) * max(1.0, float(np.max(spec.field_bounds()["a_max"]))) + 1.0
    lattice = np.linspace(-R, R, n_vel)

    def cost(vel: np.ndarray, n: int, tag: str) -> MCEstimate:
        pol = ConstantPolicy(vel.reshape(spec.m, dim), spec, chain.eps)
        return _tilted_cost(spec, chain, P, pol, horizon, n, dt, tag)

    best = None
    for v in lattice:
        e = cost(np.full(spec.m, v), paths, "mceff-pilot")
        if best is None or e.estimate < best[1]:
            best = (np.full(spec.m, v), e.estimate)
    vel = best[0].copy()
    for _ in range(sweeps):
        for c in range(spec.m):
            for v in lattice:
                trial = vel.copy()
                trial[c] = v
                e = cost(trial, paths, "mceff-pilot").estimate
                if e < best[1]:
                    best = (trial, e)
                    vel = trial
    final = cost(vel, final_paths, "mceff-final")
    return MCEstimate(-final.estimate / horizon, final.std_error / horizon, final.paths, final.discarded,
                      {"velocities": vel.tolist()})


def _tilted_cost(spec, chain, P, policy, horizon, n_paths, dt, tag) -> MCEstimate:
    n_steps = int(round(horizon / dt))
    cum = np.cumsum(chain.transition(dt), axis=1)
    stats = []
    discarded = 0
    for b, n in _blocks(n_paths):
        rng = chain.stream(tag, b)
        eta = np.zeros((n, spec.dim))
        state = rng.integers(0, spec.m, n)
        cost = np.zeros(n)
        for k in range(n_steps):
            v = policy.velocity(state, eta, k * dt)
            cost += (-(v @ P) + _lagrangian(spec, state, eta / chain.eps, -v)) * dt
            eta = eta + v * dt
            state = _step_states(rng, cum, state)
        bad = cost >= 1e-3 * INF_SENTINEL
        discarded += int(bad.sum())
        c = cost[~bad]
        stats.append((float(c.sum()), float((c * c).sum()), int(c.size)))
    return _reduce(stats, n_paths, discarded)


def write_mc_csv(path: str | Path, rows: Sequence[dict]) -> None:
    """CSV with columns ``x, t_or_mode, estimate, std_error, paths, discard_rate``."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "t_or_mode", "estimate", "std_error", "paths", "discard_rate"])
        for r in rows:
            w.writerow([f"{r['x']:.17g}", r["t_or_mode"], f"{r['estimate']:.17g}", f"{r['std_error']:.17g}",
                        r["paths"], f"{r['discard_rate']:.17g}"])
