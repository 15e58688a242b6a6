"""Vectorized numpy fallback for the stochastic-region hot loops.

Mirrors ``_kernels.pyx`` operation for operation.  A point is ``(kind, hole,
x, y)`` with ``kind`` 0 for the bulk chart (torus quotient coordinates) and 1
for the collar chart of fixed point ``hole`` (``(theta, r)``, ``r >= 0``).
Only collar dynamics with the constant rate ``lam`` and wavenumber 1 is
handled; caps and seams never meet orbits of the stochastic region.
"""
from __future__ import annotations

import math

import numpy as np

A = np.array([[13.0, 8.0], [8.0, 5.0]])
A_INV = np.array([[5.0, -8.0], [-8.0, 13.0]])
CENTERS = np.array([[0.0, 0.0], [0.5, 0.0], [0.0, 0.5], [0.5, 0.5]])
ENTER = 0.81  # bulk -> collar below this fraction of epsilon (radius factor 0.9)


def _reduce(v):
    w = v - np.floor(v)
    return np.where(w >= 1.0, 0.0, w)


def _quotient(x, y):
    x, y = _reduce(x), _reduce(y)
    nx, ny = _reduce(-x), _reduce(-y)
    flip = (nx < x) | ((nx == x) & (ny < y))
    return np.where(flip, nx, x), np.where(flip, ny, y), flip


def _project_local(theta, r):
    rho = np.sqrt(2.0 * r / math.pi)
    a = math.pi * theta
    ca, sa = np.cos(a), np.sin(a)
    return rho, ca, sa


def _matmul(P, M):
    return np.einsum("nij,njk->nik", P, M)


def _frame_times(frame, L):
    return np.einsum("ij,njk->nik", frame, L)


def _norm2(M):
    a, b, c, d = M[:, 0, 0], M[:, 0, 1], M[:, 1, 0], M[:, 1, 1]
    s = a * a + b * b + c * c + d * d
    dt = np.abs(a * d - b * c)
    disc = np.sqrt(np.maximum(s * s - 4.0 * dt * dt, 0.0))
    return np.sqrt(0.5 * (s + disc))


class _Batch:
    def __init__(self, kind, hole, x, y, direction, epsilon, lam, frame, tangent):
        self.kind = np.array(kind, dtype=np.int64)
        self.hole = np.array(hole, dtype=np.int64)
        self.x = np.array(x, dtype=float)
        self.y = np.array(y, dtype=float)
        self.d = np.asarray(direction, dtype=float) * np.ones(self.x.shape)
        self.eps = float(epsilon)
        self.lam = float(lam)
        self.frame = np.asarray(frame, dtype=float)
        self.tangent = tangent
        n = self.x.shape[0]
        self.J = np.broadcast_to(np.eye(2), (n, 2, 2)).copy() if tangent else None

    def step(self):
        kind, x, y, d = self.kind, self.x, self.y, self.d
        J = np.empty((x.shape[0], 2, 2)) if self.tangent else None
        bulk = kind == 0
        if np.any(bulk):
            fwd = d[bulk] > 0
            M = np.where(fwd[:, None, None], A, A_INV)
            bx, by = x[bulk], y[bulk]
            nx = M[:, 0, 0] * bx + M[:, 0, 1] * by
            ny = M[:, 1, 0] * bx + M[:, 1, 1] * by
            qx, qy, flip = _quotient(nx, ny)
            x[bulk], y[bulk] = qx, qy
            if J is not None:
                J[bulk] = np.where(flip[:, None, None], -M, M)
        col = ~bulk
        if np.any(col):
            th, r, t = x[col], y[col], d[col]
            psi = math.pi * th
            c, sn = np.cos(psi), np.sin(psi)
            ep, em = np.exp(self.lam * t), np.exp(-self.lam * t)
            g = ep * ep * c * c + em * em * sn * sn
            dpsi = np.arctan2(sn * c * (em - ep), ep * c * c + em * sn * sn)
            th1 = _reduce(th + dpsi / math.pi)
            x[col], y[col] = th1, r * g
            if J is not None:
                Jc = np.zeros((th.shape[0], 2, 2))
                Jc[:, 0, 0] = 1.0 / g
                Jc[:, 1, 0] = r * 2.0 * sn * c * (em * em - ep * ep) * math.pi
                Jc[:, 1, 1] = g
                J[col] = Jc
        T = self._normalize()
        if J is not None:
            self.J = _matmul(_matmul(T, J), self.J)

    def _normalize(self):
        kind, hole, x, y = self.kind, self.hole, self.x, self.y
        n = x.shape[0]
        T = np.broadcast_to(np.eye(2), (n, 2, 2)).copy() if self.tangent else None
        leave = (kind == 1) & (y > self.eps)
        if np.any(leave):
            rho, ca, sa = _project_local(x[leave], y[leave])
            u, v = rho * ca, rho * sa
            F = self.frame
            cen = CENTERS[hole[leave]]
            px = cen[:, 0] + F[0, 0] * u + F[0, 1] * v
            py = cen[:, 1] + F[1, 0] * u + F[1, 1] * v
            qx, qy, flip = _quotient(px, py)
            x[leave], y[leave] = qx, qy
            kind[leave] = 0
            if T is not None:
                L = np.empty((rho.shape[0], 2, 2))
                L[:, 0, 0] = -math.pi * rho * sa
                L[:, 0, 1] = ca / (math.pi * rho)
                L[:, 1, 0] = math.pi * rho * ca
                L[:, 1, 1] = sa / (math.pi * rho)
                D = _frame_times(F, L)
                T[leave] = np.where(flip[:, None, None], -D, D)
        bulk = kind == 0
        if np.any(bulk):
            idx = np.flatnonzero(bulk)
            bx, by = x[idx], y[idx]
            for h in range(4):
                dx = bx - CENTERS[h, 0]
                dy = by - CENTERS[h, 1]
                dx -= np.round(dx)
                dy -= np.round(dy)
                r = 0.5 * math.pi * (dx * dx + dy * dy)
                enter = (r < ENTER * self.eps) & (kind[idx] == 0)
                if not np.any(enter):
                    continue
                sel = idx[enter]
                F = self.frame
                u = F[0, 0] * dx[enter] + F[1, 0] * dy[enter]
                v = F[0, 1] * dx[enter] + F[1, 1] * dy[enter]
                th = _reduce(np.arctan2(v, u) / math.pi)
                rr = r[enter]
                x[sel], y[sel] = th, rr
                kind[sel] = 1
                hole[sel] = h
                if T is not None:
                    rho, ca, sa = _project_local(th, rr)
                    Li = np.empty((rho.shape[0], 2, 2))
                    Li[:, 0, 0] = -sa / (math.pi * rho)
                    Li[:, 0, 1] = ca / (math.pi * rho)
                    Li[:, 1, 0] = math.pi * rho * ca
                    Li[:, 1, 1] = math.pi * rho * sa
                    T[sel] = _matmul(np.einsum("nij,jk->nik", Li, F.T), T[sel])
        return T


def iterate(kind, hole, x, y, direction, n, epsilon, lam, frame):
    """Apply ``n`` steps; returns ``(kind, hole, x, y)``."""
    b = _Batch(kind, hole, x, y, direction, epsilon, lam, frame, tangent=False)
    for _ in range(int(n)):
        b.step()
    return b.kind, b.hole, b.x, b.y


def ftle(kind, hole, x, y, direction, n, epsilon, lam, frame, renorm_every=50):
    """Finite-time Lyapunov exponents of ``n`` steps.

    Returns ``(ftle, renorm_count, kind, hole, x, y)`` with the final states.
    """
    b = _Batch(kind, hole, x, y, direction, epsilon, lam, frame, tangent=True)
    logsum = np.zeros(b.x.shape[0])
    count = 0
    for i in range(1, int(n) + 1):
        b.step()
        if i % renorm_every == 0 and i < n:
            s = _norm2(b.J)
            logsum += np.log(s)
            b.J /= s[:, None, None]
            count += 1
    logsum += np.log(_norm2(b.J))
    return logsum / n, count, b.kind, b.hole, b.x, b.y
