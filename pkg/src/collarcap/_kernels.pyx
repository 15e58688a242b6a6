# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled stochastic-region hot loops; same contract as ``_kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport atan2, cos, exp, fabs, floor, log, sin, sqrt, M_PI

cnp.import_array()

cdef double ENTER = 0.81
cdef double CX[4]
cdef double CY[4]
CX[:] = [0.0, 0.5, 0.0, 0.5]
CY[:] = [0.0, 0.0, 0.5, 0.5]


cdef inline double _reduce(double v) noexcept nogil:
    cdef double w = v - floor(v)
    if w >= 1.0:
        return 0.0
    return w


cdef inline double fmod2(double f) noexcept nogil:
    return f - 2.0 * floor(0.5 * f)


cdef inline double _round(double v) noexcept nogil:
    # round half to even, matching numpy.round
    cdef double f = floor(v)
    cdef double diff = v - f
    if diff > 0.5:
        return f + 1.0
    if diff < 0.5:
        return f
    if fmod2(f) == 0.0:
        return f
    return f + 1.0


cdef inline int _quotient(double *x, double *y) noexcept nogil:
    cdef double ax = _reduce(x[0])
    cdef double ay = _reduce(y[0])
    cdef double nx = _reduce(-ax)
    cdef double ny = _reduce(-ay)
    if nx < ax or (nx == ax and ny < ay):
        x[0] = nx
        y[0] = ny
        return 1
    x[0] = ax
    y[0] = ay
    return 0


cdef inline void _mul(double *P, double *M, double *out) noexcept nogil:
    cdef double a = P[0] * M[0] + P[1] * M[2]
    cdef double b = P[0] * M[1] + P[1] * M[3]
    cdef double c = P[2] * M[0] + P[3] * M[2]
    cdef double d = P[2] * M[1] + P[3] * M[3]
    out[0] = a
    out[1] = b
    out[2] = c
    out[3] = d


cdef inline double _norm2(double *M) noexcept nogil:
    cdef double s = M[0] * M[0] + M[1] * M[1] + M[2] * M[2] + M[3] * M[3]
    cdef double dt = fabs(M[0] * M[3] - M[1] * M[2])
    cdef double disc = s * s - 4.0 * dt * dt
    if disc < 0.0:
        disc = 0.0
    return sqrt(0.5 * (s + sqrt(disc)))


cdef inline void _step(long *kind, long *hole, double *x, double *y, double d,
                       double eps, double lam, double *F, double *J, bint tangent) noexcept nogil:
    """One step followed by chart normalization; ``J`` receives the differential."""
    cdef double nx, ny, th, r, psi, c, sn, ep, em, g, dpsi, rho, ca, sa, u, v, dx, dy, rr
    cdef double S[4]
    cdef double T[4]
    cdef double L[4]
    cdef int flip, h
    if kind[0] == 0:
        if d > 0:
            S[0] = 13.0; S[1] = 8.0; S[2] = 8.0; S[3] = 5.0
        else:
            S[0] = 5.0; S[1] = -8.0; S[2] = -8.0; S[3] = 13.0
        nx = S[0] * x[0] + S[1] * y[0]
        ny = S[2] * x[0] + S[3] * y[0]
        flip = _quotient(&nx, &ny)
        x[0] = nx
        y[0] = ny
        if flip:
            S[0] = -S[0]; S[1] = -S[1]; S[2] = -S[2]; S[3] = -S[3]
    else:
        th = x[0]
        r = y[0]
        psi = M_PI * th
        c = cos(psi)
        sn = sin(psi)
        ep = exp(lam * d)
        em = exp(-lam * d)
        g = ep * ep * c * c + em * em * sn * sn
        dpsi = atan2(sn * c * (em - ep), ep * c * c + em * sn * sn)
        x[0] = _reduce(th + dpsi / M_PI)
        y[0] = r * g
        S[0] = 1.0 / g
        S[1] = 0.0
        S[2] = r * 2.0 * sn * c * (em * em - ep * ep) * M_PI
        S[3] = g
    T[0] = 1.0; T[1] = 0.0; T[2] = 0.0; T[3] = 1.0
    if kind[0] == 1 and y[0] > eps:
        rho = sqrt(2.0 * y[0] / M_PI)
        ca = cos(M_PI * x[0])
        sa = sin(M_PI * x[0])
        u = rho * ca
        v = rho * sa
        nx = CX[hole[0]] + F[0] * u + F[1] * v
        ny = CY[hole[0]] + F[2] * u + F[3] * v
        flip = _quotient(&nx, &ny)
        if tangent:
            L[0] = -M_PI * rho * sa
            L[1] = ca / (M_PI * rho)
            L[2] = M_PI * rho * ca
            L[3] = sa / (M_PI * rho)
            _mul(F, L, T)
            if flip:
                T[0] = -T[0]; T[1] = -T[1]; T[2] = -T[2]; T[3] = -T[3]
        x[0] = nx
        y[0] = ny
        kind[0] = 0
    if kind[0] == 0:
        for h in range(4):
            dx = x[0] - CX[h]
            dy = y[0] - CY[h]
            dx = dx - _round(dx)
            dy = dy - _round(dy)
            rr = 0.5 * M_PI * (dx * dx + dy * dy)
            if rr < ENTER * eps:
                u = F[0] * dx + F[2] * dy
                v = F[1] * dx + F[3] * dy
                th = _reduce(atan2(v, u) / M_PI)
                x[0] = th
                y[0] = rr
                kind[0] = 1
                hole[0] = h
                if tangent:
                    rho = sqrt(2.0 * rr / M_PI)
                    ca = cos(M_PI * th)
                    sa = sin(M_PI * th)
                    L[0] = -sa / (M_PI * rho)
                    L[1] = ca / (M_PI * rho)
                    L[2] = M_PI * rho * ca
                    L[3] = M_PI * rho * sa
                    # L @ F^T, applied after the bulk-to-bulk factor already in T
                    u = L[0] * F[0] + L[1] * F[1]
                    v = L[0] * F[2] + L[1] * F[3]
                    dx = L[2] * F[0] + L[3] * F[1]
                    dy = L[2] * F[2] + L[3] * F[3]
                    L[0] = u; L[1] = v; L[2] = dx; L[3] = dy
                    _mul(L, T, T)
                break
    if tangent:
        _mul(T, S, S)
        _mul(S, J, J)


def _prepare(kind, hole, x, y, direction):
    k = np.array(kind, dtype=np.int64)
    h = np.array(hole, dtype=np.int64)
    xx = np.array(x, dtype=np.float64)
    yy = np.array(y, dtype=np.float64)
    d = np.array(np.broadcast_to(np.asarray(direction, dtype=np.float64), xx.shape))
    return k, h, xx, yy, d


def iterate(kind, hole, x, y, direction, long n, double epsilon, double lam, frame):
    k, h, xx, yy, d = _prepare(kind, hole, x, y, direction)
    cdef long[::1] kv = k
    cdef long[::1] hv = h
    cdef double[::1] xv = xx
    cdef double[::1] yv = yy
    cdef double[::1] dv = d
    cdef double F[4]
    cdef double J[4]
    fr = np.asarray(frame, dtype=np.float64)
    F[0] = fr[0, 0]; F[1] = fr[0, 1]; F[2] = fr[1, 0]; F[3] = fr[1, 1]
    cdef Py_ssize_t i, m = xv.shape[0]
    cdef long step
    with nogil:
        for i in range(m):
            for step in range(n):
                _step(&kv[i], &hv[i], &xv[i], &yv[i], dv[i], epsilon, lam, F, J, False)
    return k, h, xx, yy


def ftle(kind, hole, x, y, direction, long n, double epsilon, double lam, frame, long renorm_every=50):
    k, h, xx, yy, d = _prepare(kind, hole, x, y, direction)
    out = np.zeros(xx.shape[0])
    cdef long[::1] kv = k
    cdef long[::1] hv = h
    cdef double[::1] xv = xx
    cdef double[::1] yv = yy
    cdef double[::1] dv = d
    cdef double[::1] ov = out
    cdef double F[4]
    cdef double J[4]
    cdef double s, logsum
    fr = np.asarray(frame, dtype=np.float64)
    F[0] = fr[0, 0]; F[1] = fr[0, 1]; F[2] = fr[1, 0]; F[3] = fr[1, 1]
    cdef Py_ssize_t i, m = xv.shape[0]
    cdef long step, count = 0
    with nogil:
        for i in range(m):
            J[0] = 1.0; J[1] = 0.0; J[2] = 0.0; J[3] = 1.0
            logsum = 0.0
            count = 0
            for step in range(1, n + 1):
                _step(&kv[i], &hv[i], &xv[i], &yv[i], dv[i], epsilon, lam, F, J, True)
                if step % renorm_every == 0 and step < n:
                    s = _norm2(J)
                    logsum += log(s)
                    J[0] /= s; J[1] /= s; J[2] /= s; J[3] /= s
                    count += 1
            logsum += log(_norm2(J))
            ov[i] = logsum / n
    return out, count, k, h, xx, yy
