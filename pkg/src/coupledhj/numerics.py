"""Pointwise numerical Hamiltonians, upwind differences and the lattice Legendre transform."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from coupledhj import kernels
from coupledhj.grid import StateField
from coupledhj.hamiltonians import INF_SENTINEL, HamiltonianSpec


class BoundaryAttainmentError(ValueError):
    """The lattice maximizer of a Legendre transform sits on the lattice boundary."""


def numerical_hamiltonian(spec: HamiltonianSpec, i: int, xi: Any, p_minus: Any, p_plus: Any, theta: float) -> np.ndarray:
    """Lax-Friedrichs flux ``H_i(xi, (p- + p+)/2) - theta/2 * sum_k (p+_k - p-_k)``.

    In 1D ``xi``, ``p_minus`` and ``p_plus`` may be scalars or arrays; in 2D the
    leading axis indexes the coordinate.
    """
    pm = np.asarray(p_minus, dtype=float)
    pp = np.asarray(p_plus, dtype=float)
    if not (np.all(np.isfinite(pm)) and np.all(np.isfinite(pp)) and np.all(np.isfinite(np.asarray(xi, dtype=float)))):
        raise ValueError("non-finite input to numerical Hamiltonian")
    jump = pp - pm if spec.dim == 1 else np.sum(pp - pm, axis=0)
    return spec.eval(i, xi, 0.5 * (pm + pp)) - 0.5 * theta * jump


def one_sided(values: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Backward and forward periodic difference quotients of ``values`` (shape ``(*grid)``).

    Returns arrays with a leading axis over coordinates.
    """
    dm = np.stack([(values - np.roll(values, 1, axis=k)) / h for k in range(values.ndim)])
    dp = np.stack([(np.roll(values, -1, axis=k) - values) / h for k in range(values.ndim)])
    return dm, dp


def upwind_gradients(field: StateField, i: int, index: Any) -> tuple[np.ndarray, np.ndarray]:
    """``(p_minus, p_plus)`` per axis at gridpoint ``index`` of component ``i``."""
    g = field.grid
    idx = (int(index),) if np.ndim(index) == 0 else tuple(int(t) for t in index)
    if len(idx) != g.dim or any(not 0 <= t < g.N for t in idx):
        raise IndexError(f"invalid gridpoint index {index}")
    u = field.values[i]
    pm = np.empty(g.dim)
    pp = np.empty(g.dim)
    for k in range(g.dim):
        pm[k] = (u[idx] - u[g.neighbor(idx, k, -1)]) / g.h
        pp[k] = (u[g.neighbor(idx, k, 1)] - u[idx]) / g.h
    return pm, pp


@dataclass(frozen=True)
class GridOperator:
    """Spec tabulated on a grid of points ``xi`` for the compiled flux loops."""

    kinds: np.ndarray
    a: np.ndarray
    V: np.ndarray
    h: float
    theta: float
    local: bool

    @classmethod
    def build(cls, spec: HamiltonianSpec, xi: np.ndarray, h: float, theta: float, flux: str = "llf") -> GridOperator:
        if flux not in ("lf", "llf"):
            raise ValueError(f"flux must be 'lf' or 'llf', got {flux!r}")
        kinds, a, V = spec.tabulate(xi)
        return cls(kinds, a, V, float(h), float(theta), flux == "llf")

    def apply(self, u: np.ndarray, P: np.ndarray | None = None) -> tuple[np.ndarray, float]:
        """Numerical Hamiltonian of every component; returns ``(values, max |gradient|)``."""
        out = np.empty_like(u)
        P = np.zeros(u.ndim - 1) if P is None else np.asarray(P, dtype=float)
        if u.ndim == 2:
            g = kernels.hamiltonian_1d(u, self.kinds, self.a, self.V, float(P[0]), self.h, self.theta, self.local, out)
        else:
            g = kernels.hamiltonian_2d(u, self.kinds, self.a, self.V, float(P[0]), float(P[1]),
                                       self.h, self.theta, self.local, out)
        return out, float(g)


def legendre_transform(spec: HamiltonianSpec, i: int, xi: Any, q_samples: Any, p_radius: float,
                       n_lattice: int | None = None, cap: float = 1e3) -> np.ndarray:
    """``L_i(xi, q) = max_p (p.q - H_i(xi, p))`` over a cube lattice of half-width ``p_radius``.

    Values above ``cap`` are returned as ``INF_SENTINEL``. A finite maximizer
    on the lattice boundary raises :class:`BoundaryAttainmentError`.

    Parameters
    ----------
    q_samples : array_like
        1D: shape ``(n_q,)``; 2D: shape ``(n_q, 2)``.
    """
    if not spec.convex_in_p[i]:
        raise ValueError(f"component {i} is not convex in p")
    dim = spec.dim
    n = n_lattice or (4001 if dim == 1 else 401)
    axis = np.linspace(-p_radius, p_radius, n)
    if dim == 1:
        p = axis[None, :]
        on_edge = np.zeros(n, dtype=bool)
        on_edge[[0, -1]] = True
    else:
        P1, P2 = np.meshgrid(axis, axis, indexing="ij")
        p = np.stack([P1.ravel(), P2.ravel()])
        e = np.zeros((n, n), dtype=bool)
        e[[0, -1], :] = True
        e[:, [0, -1]] = True
        on_edge = e.ravel()
    xi_arr = np.asarray(xi, dtype=float).reshape(dim, 1)
    H = spec.components[i].eval(np.broadcast_to(xi_arr, (dim, p.shape[1])), p)
    q = np.asarray(q_samples, dtype=float).reshape(-1, dim)
    vals = q @ p - H[None, :]
    arg = np.argmax(vals, axis=1)
    best = vals[np.arange(len(q)), arg]
    out = best.copy()
    out[best > cap] = INF_SENTINEL
    bad = (best <= cap) & on_edge[arg]
    if np.any(bad):
        raise BoundaryAttainmentError(
            f"maximizer on lattice boundary for q={q[bad][0].tolist()}; increase p_radius (now {p_radius})")
    return out
