"""Registry of Hamiltonian families ``H_i(xi, p) = a_i(xi) F_i(|p|) - V_i(xi)``.

Profiles ``F``: ``zero`` (F = 0), ``abs`` (F = |p|), ``quadratic`` (F = |p|^2)
and ``quartic`` (F = (|p|^2 - 1)^2). Only the quartic profile is nonconvex.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping, Sequence

import numpy as np

from coupledhj.fields import Field, make_field

INF_SENTINEL = 1e300

KIND_CODES = {"zero": 0, "abs": 1, "quadratic": 2, "quartic": 3}
MIN_RADIUS = {"zero": 0.0, "abs": 0.0, "quadratic": 0.0, "quartic": 1.0}


def profile(kind: str, r: np.ndarray) -> np.ndarray:
    """Profile ``F(r)`` evaluated at ``r = |p|``."""
    r = np.asarray(r, dtype=float)
    if kind == "zero":
        return np.zeros_like(r)
    if kind == "abs":
        return np.abs(r)
    if kind == "quadratic":
        return r * r
    if kind == "quartic":
        return (r * r - 1.0) ** 2
    raise ValueError(f"unknown profile {kind!r}")


def profile_slope_bound(kind: str, R: float) -> float:
    """``sup_{0 <= r <= R} |F'(r)|``."""
    R = float(R)
    if kind == "zero":
        return 0.0
    if kind == "abs":
        return 1.0
    if kind == "quadratic":
        return 2.0 * R
    r = np.linspace(0.0, R, 4097)
    return float(np.max(np.abs(4.0 * r * (r * r - 1.0))))


@dataclass(frozen=True)
class Component:
    """One Hamiltonian ``a(xi) F(|p|) - V(xi)``."""

    kind: str
    a: Field
    V: Field

    def __post_init__(self) -> None:
        if self.kind not in KIND_CODES:
            raise ValueError(f"unknown Hamiltonian family {self.kind!r}; known: {sorted(KIND_CODES)}")

    @classmethod
    def build(cls, kind: str, a: Any = 1.0, V: Any = 0.0) -> Component:
        return cls(kind, make_field(a), make_field(V))

    @property
    def code(self) -> int:
        return KIND_CODES[self.kind]

    @property
    def convex(self) -> bool:
        return self.kind != "quartic"

    def eval(self, xi: np.ndarray, p: np.ndarray) -> np.ndarray:
        """Evaluate at points ``xi`` and momenta ``p``, both with leading axis ``dim``."""
        r = np.sqrt(np.sum(np.asarray(p, dtype=float) ** 2, axis=0))
        return self.a(xi) * profile(self.kind, r) - self.V(xi)

    def grad_p(self, xi: np.ndarray, p: np.ndarray) -> np.ndarray:
        """``dH/dp`` with leading axis ``dim``; the ``abs`` profile uses 0 at ``p = 0``."""
        p = np.asarray(p, dtype=float)
        r = np.sqrt(np.sum(p**2, axis=0))
        a = self.a(xi)
        if self.kind == "zero":
            return np.zeros_like(p * a)
        if self.kind == "abs":
            safe = np.where(r > 0, r, 1.0)
            return np.where(r > 0, a / safe, 0.0) * p
        if self.kind == "quadratic":
            return 2.0 * a * p
        return 4.0 * a * (r * r - 1.0) * p

    def lagrangian(self, xi: np.ndarray, q: np.ndarray) -> np.ndarray:
        """Closed-form convex conjugate ``sup_p (p.q - H)``; ``INF_SENTINEL`` where infinite."""
        if not self.convex:
            raise ValueError("Lagrangian requested for a nonconvex component")
        q = np.asarray(q, dtype=float)
        s = np.sqrt(np.sum(q**2, axis=0))
        a = self.a(xi)
        V = self.V(xi)
        if self.kind == "quadratic":
            return s * s / (4.0 * a) + V
        if self.kind == "abs":
            return np.where(s <= a * (1.0 + 1e-9), V, INF_SENTINEL)
        return np.where(s <= 1e-12, V, INF_SENTINEL)

    def describe(self) -> dict[str, Any]:
        return {"family": self.kind, "a": self.a.describe(), "V": self.V.describe()}


def sample_points(dim: int, n: int | None = None) -> np.ndarray:
    """Regular sample lattice on the torus used for sup/inf estimates of fields."""
    n = n or (2048 if dim == 1 else 256)
    x = np.arange(n) / n
    return np.stack(np.meshgrid(*([x] * dim), indexing="ij"))


@dataclass(frozen=True)
class HamiltonianSpec:
    """Collection of ``m`` Hamiltonian components on a ``dim``-dimensional torus."""

    components: tuple[Component, ...]
    dim: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "components", tuple(self.components))
        if not self.components:
            raise ValueError("at least one component required")
        for c in self.components:
            for f in (c.a, c.V):
                if self.dim not in f.dims:
                    raise ValueError(f"field {f.name} does not support dim={self.dim}")

    @classmethod
    def from_config(cls, entries: Sequence[Mapping[str, Any]], dim: int = 1) -> HamiltonianSpec:
        comps = []
        for e in entries:
            extra = set(e) - {"family", "a", "V"}
            if extra:
                raise ValueError(f"unknown Hamiltonian keys {sorted(extra)}")
            comps.append(Component.build(e["family"], e.get("a", 1.0), e.get("V", 0.0)))
        return cls(tuple(comps), dim)

    @property
    def m(self) -> int:
        return len(self.components)

    @property
    def convex_in_p(self) -> tuple[bool, ...]:
        return tuple(c.convex for c in self.components)

    @property
    def all_convex(self) -> bool:
        return all(self.convex_in_p)

    @property
    def form(self) -> str:
        """``separable`` when every component reads ``F(p) - V(xi)``, else ``general``."""
        ok = all(c.a.is_constant and c.a.constant_value == 1.0 for c in self.components)
        return "separable" if ok else "general"

    @property
    def homogeneous(self) -> bool:
        """Positively 1-homogeneous in ``p`` (``abs`` or ``zero`` profile with zero potential)."""
        return all(c.kind in ("abs", "zero") and c.V.is_constant and c.V.constant_value == 0.0
                   for c in self.components)

    @property
    def even_in_p(self) -> bool:
        return True

    def describe(self) -> list[dict[str, Any]]:
        return [c.describe() for c in self.components]

    def eval(self, i: int, xi: Any, p: Any) -> np.ndarray:
        """``H_i(xi, p)``. In 1D plain arrays are accepted; in 2D the leading axis is the coordinate."""
        return self.components[i].eval(self._lift(xi), self._lift(p))

    def _lift(self, x: Any) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.dim == 1:
            return x[None, ...]
        if x.shape[:1] != (self.dim,):
            raise ValueError(f"expected leading axis of length {self.dim}")
        return x

    def tabulate(self, xi: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Kind codes and coefficient arrays ``a``, ``V`` of shape ``(m, *xi.shape[1:])``."""
        kinds = np.array([c.code for c in self.components], dtype=np.int64)
        a = np.stack([c.a(xi) for c in self.components])
        V = np.stack([c.V(xi) for c in self.components])
        return kinds, np.ascontiguousarray(a), np.ascontiguousarray(V)

    def field_bounds(self, n: int | None = None) -> dict[str, np.ndarray]:
        """Sampled ``min``/``max`` of ``a_i`` and ``V_i`` on a fine torus lattice."""
        pts = sample_points(self.dim, n)
        _, a, V = self.tabulate(pts)
        ax = tuple(range(1, a.ndim))
        return {"a_min": a.min(axis=ax), "a_max": a.max(axis=ax), "V_min": V.min(axis=ax), "V_max": V.max(axis=ax)}

    @property
    def lip_p(self) -> float:
        """Global bound on ``|D_p H_i|`` (``inf`` for superlinear profiles)."""
        b = self.field_bounds()
        out = 0.0
        for i, c in enumerate(self.components):
            if c.kind in ("quadratic", "quartic"):
                return float("inf")
            if c.kind == "abs":
                out = max(out, float(b["a_max"][i]))
        return out

    def theta(self, R_grad: float, a_max: np.ndarray | None = None) -> float:
        """Global Lax-Friedrichs constant: ``max_i sup a_i * sup_{|p|<=R} |F_i'|``."""
        if a_max is None:
            a_max = self.field_bounds()["a_max"]
        return float(max(a_max[i] * profile_slope_bound(c.kind, R_grad) for i, c in enumerate(self.components)))

    def default_R_grad(self, P: np.ndarray | float = 0.0) -> float:
        """Expected gradient range of cell correctors at slope ``P``."""
        Pn = float(np.linalg.norm(np.atleast_1d(P)))
        b = self.field_bounds()
        if any(c.kind == "quadratic" for c in self.components):
            osc = float(np.max(b["V_max"]) - np.min(b["V_min"]))
            return Pn + float(np.sqrt(osc / max(float(np.min(b["a_min"])), 1e-12) + 2.0)) + 1.0
        return Pn + 4.0

    def coercivity_probe(self, R_max: float, n: int = 64, seed: int = 0) -> bool:
        """``H_i(xi, p)`` at ``|p| = R_max`` exceeds ``H_i(xi, 0)`` at sampled points."""
        rng = np.random.default_rng(seed)
        xi = rng.random((self.dim, n))
        dirs = rng.normal(size=(self.dim, n))
        dirs /= np.linalg.norm(dirs, axis=0)
        for c in self.components:
            if c.kind == "zero":
                return False
            if np.any(c.eval(xi, R_max * dirs) <= c.eval(xi, np.zeros_like(dirs))):
                return False
        return True

    def max_hamiltonian(self) -> HamiltonianSpec:
        """Single-component spec for ``max_i H_i`` when it stays in the registry.

        Supported: equal profiles and speeds (potential becomes ``min_i V_i``),
        or equal profiles and potentials with a nonnegative profile (speed
        becomes ``max_i a_i``). The result uses tabulated fields on a fine lattice.
        """
        kinds = {c.kind for c in self.components}
        if len(kinds) != 1:
            raise NotImplementedError("max Hamiltonian of mixed profiles is outside the registry")
        kind = kinds.pop()
        n = 2048 if self.dim == 1 else 256
        pts = sample_points(self.dim, n)
        _, a, V = self.tabulate(pts)
        if np.allclose(a, a[0]):
            comp = Component.build(kind, {"name": "tabulated", "values": a[0].tolist()},
                                   {"name": "tabulated", "values": V.min(axis=0).tolist()})
        elif np.allclose(V, V[0]):
            comp = Component.build(kind, {"name": "tabulated", "values": a.max(axis=0).tolist()},
                                   {"name": "tabulated", "values": V[0].tolist()})
        else:
            raise NotImplementedError("max Hamiltonian needs equal speeds or equal potentials")
        return HamiltonianSpec((comp,), self.dim)
