"""Periodic grids, multi-component grid functions and row-stochastic coupling matrices."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ROW_SUM_TOL = 1e-12


@dataclass(frozen=True)
class TorusGrid:
    """Uniform periodic grid on the unit torus ``[0, 1)^dim``.

    Parameters
    ----------
    dim : int
        Space dimension, 1 or 2.
    N : int
        Points per axis, at least 8. Gridpoints are ``k / N`` for ``k = 0..N-1``.
    """

    dim: int
    N: int

    def __post_init__(self) -> None:
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if int(self.N) != self.N or self.N < 8:
            raise ValueError(f"points per axis must be an integer >= 8, got {self.N}")

    @property
    def points_per_axis(self) -> int:
        return self.N

    @property
    def spacing(self) -> float:
        return 1.0 / self.N

    @property
    def h(self) -> float:
        return 1.0 / self.N

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.dim

    @property
    def size(self) -> int:
        return self.N**self.dim

    def axis(self) -> np.ndarray:
        """Coordinates ``k/N`` along one axis."""
        return np.arange(self.N) / self.N

    def mesh(self) -> np.ndarray:
        """Point coordinates with shape ``(dim, N, ..., N)``; ``(1, N)`` in 1D."""
        x = self.axis()
        return np.stack(np.meshgrid(*([x] * self.dim), indexing="ij"))

    def wrap(self, index: int) -> int:
        return index % self.N

    def neighbor(self, index: tuple[int, ...], axis: int, step: int) -> tuple[int, ...]:
        """Periodic neighbour of a multi-index ``index`` along ``axis``."""
        idx = list(index)
        idx[axis] = (idx[axis] + step) % self.N
        return tuple(idx)


@dataclass
class StateField:
    """Values of ``m`` grid functions on a common grid at one time level.

    ``values`` has shape ``(m, *grid.shape)``.
    """

    grid: TorusGrid
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape[1:] != self.grid.shape:
            raise ValueError(f"values shape {self.values.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("state values must be finite")

    @property
    def m(self) -> int:
        return self.values.shape[0]

    def component(self, i: int) -> np.ndarray:
        return self.values[i]

    def copy(self) -> StateField:
        return StateField(self.grid, self.values.copy(), self.time)


@dataclass(frozen=True)
class CouplingMatrix:
    """Row-stochastic switching matrix ``K`` with nonnegative entries.

    The coupling term of component ``i`` is ``(1/eps) * (u_i - sum_j K_ij u_j)``;
    the generator of the switching chain is ``(K - I) / eps``.
    """

    matrix: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        K = np.array(self.matrix, dtype=float)
        if K.ndim != 2 or K.shape[0] != K.shape[1]:
            raise ValueError("coupling matrix must be square")
        if np.any(K < 0):
            raise ValueError("coupling matrix entries must be nonnegative")
        if np.max(np.abs(K.sum(axis=1) - 1.0)) > ROW_SUM_TOL:
            raise ValueError("every row of the coupling matrix must sum to 1")
        K.setflags(write=False)
        object.__setattr__(self, "matrix", K)

    @classmethod
    def symmetric(cls, m: int = 2) -> CouplingMatrix:
        """Uniform switching to the other ``m - 1`` states; for ``m = 2`` this is ``[[0,1],[1,0]]``."""
        if m == 1:
            return cls(np.ones((1, 1)))
        K = np.full((m, m), 1.0 / (m - 1))
        np.fill_diagonal(K, 0.0)
        return cls(K)

    @classmethod
    def from_rates(cls, c1: float, c2: float) -> CouplingMatrix:
        """Two-state coupling ``c_i (u_i - u_j)``; requires ``0 < c_i <= 1``."""
        if not (0 < c1 <= 1 and 0 < c2 <= 1):
            raise ValueError("rates must lie in (0, 1] to give a row-stochastic K")
        return cls(np.array([[1.0 - c1, c1], [c2, 1.0 - c2]]))

    @property
    def m(self) -> int:
        return self.matrix.shape[0]

    @property
    def rates(self) -> np.ndarray:
        """Total jump rate out of each state (times ``1/eps``)."""
        return 1.0 - np.diag(self.matrix)

    def generator(self, eps: float = 1.0) -> np.ndarray:
        return (self.matrix - np.eye(self.m)) / eps

    def is_doubly_stochastic(self, tol: float = 1e-12) -> bool:
        return bool(np.max(np.abs(self.matrix.sum(axis=0) - 1.0)) <= tol)

    def perron_left(self) -> np.ndarray:
        """Normalized left Perron vector ``pi`` with ``pi K = pi`` and ``sum(pi) = 1``."""
        if self.m == 1:
            return np.ones(1)
        A = np.vstack([(self.matrix - np.eye(self.m)).T, np.ones(self.m)])
        b = np.zeros(self.m + 1)
        b[-1] = 1.0
        pi, *_ = np.linalg.lstsq(A, b, rcond=None)
        return pi

    def average(self, f: np.ndarray) -> np.ndarray:
        """Chain-weighted combination ``sum_i pi_i f_i`` over the leading axis of ``f``."""
        return np.tensordot(self.perron_left(), np.asarray(f, dtype=float), axes=(0, 0))
