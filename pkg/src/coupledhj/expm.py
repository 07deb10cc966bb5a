"""Matrix exponential for small dense matrices by Pade scaling and squaring."""
from __future__ import annotations

import math

import numpy as np

PADE_DEGREE = 6
THETA_SCALE = 0.5


def _pade_coefficients(q: int) -> np.ndarray:
    return np.array([math.factorial(2 * q - k) * math.factorial(q)
                     / (math.factorial(2 * q) * math.factorial(k) * math.factorial(q - k)) for k in range(q + 1)])


_COEF = _pade_coefficients(PADE_DEGREE)


def expm(A: np.ndarray) -> np.ndarray:
    """``exp(A)`` via a diagonal (6,6) Pade approximant after scaling ``||A||_1 <= 1/2``.

    Intended for the ``m <= 8`` switching generators; truncation error is below
    double roundoff at the scaled norm.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("expm needs a square matrix")
    if A.shape[0] > 8:
        raise ValueError("expm is meant for m <= 8")
    norm = np.max(np.sum(np.abs(A), axis=0)) if A.size else 0.0
    s = 0 if norm <= THETA_SCALE else int(math.ceil(math.log2(norm / THETA_SCALE)))
    X = A / 2.0**s
    n = A.shape[0]
    I = np.eye(n)
    powers = [I]
    for _ in range(PADE_DEGREE):
        powers.append(powers[-1] @ X)
    even = sum(_COEF[k] * powers[k] for k in range(0, PADE_DEGREE + 1, 2))
    odd = sum(_COEF[k] * powers[k] for k in range(1, PADE_DEGREE + 1, 2))
    E = np.linalg.solve(even - odd, even + odd)
    for _ in range(s):
        E = E @ E
    return E


def two_state_propagator(c1: float, c2: float, s: float) -> np.ndarray:
    """Closed form of ``exp(s (K - I))`` for ``K = [[1-c1, c1], [c2, 1-c2]]``."""
    lam = c1 + c2
    if lam == 0.0:
        return np.eye(2)
    e = math.exp(-lam * s)
    return np.array([[c2 + c1 * e, c1 * (1.0 - e)], [c2 * (1.0 - e), c1 + c2 * e]]) / lam


def coupling_propagator(K: np.ndarray, dt: float, eps: float) -> np.ndarray:
    """Exact coupling step ``exp(dt (K - I) / eps)``; closed form for two states."""
    K = np.asarray(K, dtype=float)
    if K.shape == (2, 2):
        return two_state_propagator(K[0, 1], K[1, 0], dt / eps)
    return expm((K - np.eye(K.shape[0])) * (dt / eps))
