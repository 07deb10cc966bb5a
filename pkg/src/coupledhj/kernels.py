"""Compiled loops for monotone Hamiltonian fluxes on periodic grids.

Kind codes: 0 zero, 1 ``|p|``, 2 ``|p|^2``, 3 ``(|p|^2 - 1)^2``; every
Hamiltonian reads ``a * F(|p|) - V``. With ``local`` set, convex kinds use a
per-axis local Lax-Friedrichs constant; otherwise (and always for kind 3) the
supplied global constant ``theta`` is used on every axis.
"""
from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def profile(kind, r2):
    if kind == 0:
        return 0.0
    if kind == 1:
        return np.sqrt(r2)
    if kind == 2:
        return r2
    q = r2 - 1.0
    return q * q


@njit(cache=True, nogil=True)
def axis_theta(kind, a, pm, pp, theta, local):
    if not local or kind == 3:
        return theta
    if kind == 1:
        return a
    if kind == 2:
        return 2.0 * a * max(abs(pm), abs(pp))
    return 0.0


@njit(cache=True, nogil=True)
def flux1(kind, a, V, pm, pp, theta, local):
    q = 0.5 * (pm + pp)
    th = axis_theta(kind, a, pm, pp, theta, local)
    return a * profile(kind, q * q) - V - 0.5 * th * (pp - pm)


@njit(cache=True, nogil=True)
def flux2(kind, a, V, pm1, pp1, pm2, pp2, theta, local):
    q1 = 0.5 * (pm1 + pp1)
    q2 = 0.5 * (pm2 + pp2)
    t1 = axis_theta(kind, a, pm1, pp1, theta, local)
    t2 = axis_theta(kind, a, pm2, pp2, theta, local)
    return a * profile(kind, q1 * q1 + q2 * q2) - V - 0.5 * t1 * (pp1 - pm1) - 0.5 * t2 * (pp2 - pm2)


@njit(cache=True, nogil=True)
def hamiltonian_1d(u, kinds, a, V, P, h, theta, local, out):
    """Numerical Hamiltonian of every component at every point; returns max |gradient| seen."""
    m, N = u.shape
    gmax = 0.0
    for i in range(m):
        kd = kinds[i]
        for k in range(N):
            km = k - 1 if k > 0 else N - 1
            kp = k + 1 if k < N - 1 else 0
            pm = P + (u[i, k] - u[i, km]) / h
            pp = P + (u[i, kp] - u[i, k]) / h
            gmax = max(gmax, abs(pm), abs(pp))
            out[i, k] = flux1(kd, a[i, k], V[i, k], pm, pp, theta, local)
    return gmax


@njit(cache=True, nogil=True)
def hamiltonian_2d(u, kinds, a, V, P1, P2, h, theta, local, out):
    m, N, M = u.shape
    gmax = 0.0
    for i in range(m):
        kd = kinds[i]
        for k in range(N):
            km = k - 1 if k > 0 else N - 1
            kp = k + 1 if k < N - 1 else 0
            for l in range(M):
                lm = l - 1 if l > 0 else M - 1
                lp = l + 1 if l < M - 1 else 0
                c = u[i, k, l]
                pm1 = P1 + (c - u[i, km, l]) / h
                pp1 = P1 + (u[i, kp, l] - c) / h
                pm2 = P2 + (c - u[i, k, lm]) / h
                pp2 = P2 + (u[i, k, lp] - c) / h
                gmax = max(gmax, np.sqrt(max(pm1 * pm1, pp1 * pp1) + max(pm2 * pm2, pp2 * pp2)))
                out[i, k, l] = flux2(kd, a[i, k, l], V[i, k, l], pm1, pp1, pm2, pp2, theta, local)
    return gmax


@njit(cache=True, nogil=True)
def cell_march_1d(w, kinds, a, V, P, K, delta, h, dt, theta, local, tol, nsteps):
    """Mean-projected pseudo-time march for the discounted cell system.

    Each step forms ``R = N(w) + (1 + delta) w - K w`` and updates
    ``w -= dt * (R - mean R)``. Returns ``(steps, mean R, max|R - mean R|, max|grad|)``.
    """
    m, N = w.shape
    R = np.empty_like(w)
    mean = 0.0
    err = np.inf
    gmax = 0.0
    for it in range(nsteps):
        s = 0.0
        gmax = 0.0
        for i in range(m):
            kd = kinds[i]
            for k in range(N):
                km = k - 1 if k > 0 else N - 1
                kp = k + 1 if k < N - 1 else 0
                pm = P + (w[i, k] - w[i, km]) / h
                pp = P + (w[i, kp] - w[i, k]) / h
                gmax = max(gmax, abs(pm), abs(pp))
                r = flux1(kd, a[i, k], V[i, k], pm, pp, theta, local) + (1.0 + delta) * w[i, k]
                for j in range(m):
                    r -= K[i, j] * w[j, k]
                R[i, k] = r
                s += r
        mean = s / (m * N)
        err = 0.0
        for i in range(m):
            for k in range(N):
                d = R[i, k] - mean
                err = max(err, abs(d))
                w[i, k] -= dt * d
        if err < tol:
            return it + 1, mean, err, gmax
    return nsteps, mean, err, gmax


@njit(cache=True, nogil=True)
def cell_march_2d(w, kinds, a, V, P1, P2, K, delta, h, dt, theta, local, tol, nsteps):
    m, N, M = w.shape
    R = np.empty_like(w)
    mean = 0.0
    err = np.inf
    gmax = 0.0
    for it in range(nsteps):
        s = 0.0
        gmax = 0.0
        for i in range(m):
            kd = kinds[i]
            for k in range(N):
                km = k - 1 if k > 0 else N - 1
                kp = k + 1 if k < N - 1 else 0
                for l in range(M):
                    lm = l - 1 if l > 0 else M - 1
                    lp = l + 1 if l < M - 1 else 0
                    c = w[i, k, l]
                    pm1 = P1 + (c - w[i, km, l]) / h
                    pp1 = P1 + (w[i, kp, l] - c) / h
                    pm2 = P2 + (c - w[i, k, lm]) / h
                    pp2 = P2 + (w[i, k, lp] - c) / h
                    gmax = max(gmax, np.sqrt(max(pm1 * pm1, pp1 * pp1) + max(pm2 * pm2, pp2 * pp2)))
                    r = flux2(kd, a[i, k, l], V[i, k, l], pm1, pp1, pm2, pp2, theta, local) + (1.0 + delta) * c
                    for j in range(m):
                        r -= K[i, j] * w[j, k, l]
                    R[i, k, l] = r
                    s += r
        mean = s / (m * N * M)
        err = 0.0
        for i in range(m):
            for k in range(N):
                for l in range(M):
                    d = R[i, k, l] - mean
                    err = max(err, abs(d))
                    w[i, k, l] -= dt * d
        if err < tol:
            return it + 1, mean, err, gmax
    return nsteps, mean, err, gmax


@njit(cache=True, nogil=True)
def _boundary_flux(kind, a, V, s):
    return a * profile(kind, s * s) - V


@njit(cache=True, nogil=True)
def dirichlet_march_1d(u, kinds, a, V, rstar, K, inv_eps, h, dt, theta, local, gL, gR, tol, nsteps):
    """Pseudo-time march of ``u_i + H_i + inv_eps (u_i - sum_j K_ij u_j) = 0`` on an interval.

    End nodes use the monotone one-sided fluxes ``H(min(p+, -r*))`` (left) and
    ``H(max(p-, r*))`` (right), then the projection ``u <- min(u, g)``.
    Returns ``(steps, max |du|/dt)``.
    """
    m, n = u.shape
    R = np.empty_like(u)
    err = np.inf
    for it in range(nsteps):
        for i in range(m):
            kd = kinds[i]
            for k in range(n):
                if k == 0:
                    s = min((u[i, 1] - u[i, 0]) / h, -rstar[i])
                    r = _boundary_flux(kd, a[i, 0], V[i, 0], s)
                elif k == n - 1:
                    s = max((u[i, k] - u[i, k - 1]) / h, rstar[i])
                    r = _boundary_flux(kd, a[i, k], V[i, k], s)
                else:
                    pm = (u[i, k] - u[i, k - 1]) / h
                    pp = (u[i, k + 1] - u[i, k]) / h
                    r = flux1(kd, a[i, k], V[i, k], pm, pp, theta, local)
                r += u[i, k]
                c = u[i, k]
                for j in range(m):
                    c -= K[i, j] * u[j, k]
                R[i, k] = r + inv_eps * c
        err = 0.0
        for i in range(m):
            for k in range(n):
                new = u[i, k] - dt * R[i, k]
                if k == 0:
                    new = min(new, gL[i])
                elif k == n - 1:
                    new = min(new, gR[i])
                err = max(err, abs(new - u[i, k]) / dt)
                u[i, k] = new
        if err < tol:
            return it + 1, err
    return nsteps, err
