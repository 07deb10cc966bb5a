"""Named periodic scalar fields used as speed coefficients ``a(xi)`` and potentials ``V(xi)``.

A field is evaluated on points ``xi`` with shape ``(dim, ...)`` and is 1-periodic
in every coordinate. Fields are built from config entries: a bare number is a
constant field, otherwise a mapping ``{"name": <family>, **params}``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np

TWO_PI = 2.0 * np.pi


def smoothstep(t: np.ndarray) -> np.ndarray:
    """Quintic smoothstep, exactly 0 for ``t <= 0`` and exactly 1 for ``t >= 1``."""
    t = np.clip(t, 0.0, 1.0)
    return t**3 * (t * (6.0 * t - 15.0) + 10.0)


def plateau(x: np.ndarray, inner: tuple[float, float], outer: tuple[float, float]) -> np.ndarray:
    """Smooth bump equal to 1 on ``[inner]`` and 0 outside ``(outer)``.

    Periodicity is handled by the caller reducing ``x`` modulo 1; the outer
    interval must lie inside ``[0, 1]``.
    """
    a, b = inner
    a0, b0 = outer
    if not (0.0 <= a0 < a <= b < b0 <= 1.0):
        raise ValueError(f"need 0 <= a0 < a <= b < b0 <= 1, got inner={inner}, outer={outer}")
    x = np.mod(x, 1.0)
    return smoothstep((x - a0) / (a - a0)) * smoothstep((b0 - x) / (b0 - b))


def explicit_speed(x: np.ndarray) -> np.ndarray:
    """Speed coefficient of the explicit pair ``(|p|, a(xi)|p|)`` whose effective Hamiltonian is ``|P|``."""
    c = np.cos(TWO_PI * x)
    s = np.sin(TWO_PI * x)
    num = 1.0 - (c / (8.0 * np.pi**2) + s / (4.0 * np.pi))
    den = 1.0 + (0.5 + 1.0 / (8.0 * np.pi**2)) * c
    return num / den


def explicit_correctors(x: np.ndarray, sign: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Exact correctors ``(v1, v2)`` of the explicit pair at ``P = sign``."""
    c = np.cos(TWO_PI * x)
    s = np.sin(TWO_PI * x)
    v1 = s / (16.0 * np.pi**3) - c / (8.0 * np.pi**2)
    v2 = (1.0 / (4.0 * np.pi) + 1.0 / (16.0 * np.pi**3)) * s
    return sign * v1, sign * v2


def trig_pair(x: np.ndarray, which: int) -> np.ndarray:
    """Potentials for which ``(cos, sin)`` solve the cell problem at ``P = 0`` with zero value."""
    c = np.cos(TWO_PI * x)
    s = np.sin(TWO_PI * x)
    if which == 1:
        return 4.0 * np.pi**2 * s**2 + c - s
    if which == 2:
        return 4.0 * np.pi**2 * c**2 + s - c
    raise ValueError("which must be 1 or 2")


@dataclass(frozen=True)
class Field:
    """Periodic scalar field with a description used in reports."""

    name: str
    params: Mapping[str, Any]
    func: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)
    dims: tuple[int, ...] = (1, 2)

    def __call__(self, xi: np.ndarray) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        out = self.func(xi)
        return np.broadcast_to(out, xi.shape[1:]).astype(float)

    @property
    def is_constant(self) -> bool:
        return self.name == "const"

    @property
    def constant_value(self) -> float:
        if not self.is_constant:
            raise ValueError(f"field {self.name} is not constant")
        return float(self.params["value"])

    def describe(self) -> dict[str, Any]:
        return {"name": self.name, **dict(self.params)}


def _coord(xi: np.ndarray, axis: int) -> np.ndarray:
    if axis >= xi.shape[0]:
        raise ValueError(f"field uses axis {axis} but points have dim {xi.shape[0]}")
    return xi[axis]


def _periodic_linear(table: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
    """Periodic (bi)linear interpolation of values given at ``k/n`` per axis."""
    table = np.asarray(table, dtype=float)

    def f(xi: np.ndarray) -> np.ndarray:
        if xi.shape[0] != table.ndim:
            raise ValueError("tabulated field dimension mismatch")
        idx0 = []
        wts = []
        for k in range(table.ndim):
            n = table.shape[k]
            s = np.mod(xi[k], 1.0) * n
            i0 = np.floor(s).astype(int)
            idx0.append(i0 % n)
            wts.append(s - i0)
        if table.ndim == 1:
            n = table.shape[0]
            i, w = idx0[0], wts[0]
            return (1 - w) * table[i] + w * table[(i + 1) % n]
        n0, n1 = table.shape
        i, j = idx0
        w0, w1 = wts
        ip, jp = (i + 1) % n0, (j + 1) % n1
        return ((1 - w0) * (1 - w1) * table[i, j] + w0 * (1 - w1) * table[ip, j]
                + (1 - w0) * w1 * table[i, jp] + w0 * w1 * table[ip, jp])

    return f


def make_field(entry: Any) -> Field:
    """Build a field from a number or a ``{"name": ..., **params}`` mapping.

    Families
    --------
    const(value)
    explicit_speed()
        1D speed coefficient of the explicit pair.
    trig_pair(which)
        1D potentials ``4 pi^2 sin^2 + cos - sin`` (1) and ``4 pi^2 cos^2 + sin - cos`` (2).
    plateau(inner, outer, inside, outside, axis=0)
        ``inside`` on the closed ``inner`` interval, ``outside`` off the open
        ``outer`` interval, smoothstep transition in between.
    cosine_well(amplitude=1, center=0, axis=0)
        ``amplitude * (1 - cos(2 pi (x - center)))``, zero only at ``center``.
    trig(amplitude=1, k=1, center=0, offset=0, axis=0)
        ``offset + amplitude * cos(2 pi k (x - center))``.
    modulated_well(center, axis, mod_axis, beta)
        ``(1 - cos(2 pi (x_axis - center))) * (1 + beta sin(2 pi x_mod_axis))``.
    tabulated(values)
        Periodic linear (1D) or bilinear (2D) interpolation of lattice values at ``k/n``.
    """
    if isinstance(entry, (int, float, np.floating)):
        value = float(entry)
        return Field("const", {"value": value}, lambda xi: np.full(xi.shape[1:], value))
    if not isinstance(entry, Mapping) or "name" not in entry:
        raise ValueError(f"field entry must be a number or a mapping with 'name', got {entry!r}")
    params = {k: v for k, v in entry.items() if k != "name"}
    name = entry["name"]
    builder = FIELD_FAMILIES.get(name)
    if builder is None:
        raise ValueError(f"unknown field family {name!r}; known: {sorted(FIELD_FAMILIES)}")
    try:
        func, dims = builder(**params)
    except TypeError as exc:
        raise ValueError(f"bad parameters for field {name!r}: {exc}") from None
    return Field(name, params, func, dims)


def _const(value: float):
    value = float(value)
    return (lambda xi: np.full(xi.shape[1:], value)), (1, 2)


def _explicit_speed():
    return (lambda xi: explicit_speed(_coord(xi, 0))), (1,)


def _trig_pair(which: int):
    which = int(which)
    if which not in (1, 2):
        raise TypeError("which must be 1 or 2")
    return (lambda xi: trig_pair(_coord(xi, 0), which)), (1,)


def _plateau(inner, outer, inside: float, outside: float, axis: int = 0):
    inner = (float(inner[0]), float(inner[1]))
    outer = (float(outer[0]), float(outer[1]))
    plateau(np.zeros(1), inner, outer)
    inside, outside = float(inside), float(outside)
    axis = int(axis)

    def f(xi):
        return outside + (inside - outside) * plateau(_coord(xi, axis), inner, outer)

    return f, (1, 2) if axis == 0 else (2,)


def _cosine_well(amplitude: float = 1.0, center: float = 0.0, axis: int = 0):
    amplitude, center, axis = float(amplitude), float(center), int(axis)

    def f(xi):
        return amplitude * (1.0 - np.cos(TWO_PI * (_coord(xi, axis) - center)))

    return f, (1, 2) if axis == 0 else (2,)


def _trig(amplitude: float = 1.0, k: int = 1, center: float = 0.0, offset: float = 0.0, axis: int = 0):
    amplitude, center, offset, axis = float(amplitude), float(center), float(offset), int(axis)
    k = int(k)

    def f(xi):
        return offset + amplitude * np.cos(TWO_PI * k * (_coord(xi, axis) - center))

    return f, (1, 2) if axis == 0 else (2,)


def _modulated_well(center: float = 0.5, axis: int = 1, mod_axis: int = 0, beta: float = 0.5):
    center, axis, mod_axis, beta = float(center), int(axis), int(mod_axis), float(beta)
    if abs(beta) >= 1:
        raise TypeError("|beta| must be < 1 to keep the well nonnegative")

    def f(xi):
        well = 1.0 - np.cos(TWO_PI * (_coord(xi, axis) - center))
        return well * (1.0 + beta * np.sin(TWO_PI * _coord(xi, mod_axis)))

    return f, (2,)


def _tabulated(values):
    table = np.asarray(values, dtype=float)
    if table.ndim not in (1, 2) or min(table.shape) < 2 or not np.all(np.isfinite(table)):
        raise TypeError("values must be a finite 1D or 2D lattice with >= 2 points per axis")
    return _periodic_linear(table), (table.ndim,)


FIELD_FAMILIES: dict[str, Callable[..., tuple[Callable, tuple[int, ...]]]] = {
    "const": _const,
    "explicit_speed": _explicit_speed,
    "trig_pair": _trig_pair,
    "plateau": _plateau,
    "cosine_well": _cosine_well,
    "trig": _trig,
    "modulated_well": _modulated_well,
    "tabulated": _tabulated,
}
