"""Planar primitives: finite-difference Jacobians, area defect, bisection events.

Points are plain ``(x, y)`` pairs of floats and 2x2 matrices are numpy
arrays.  Angles are never wrapped here; that is the owning chart's job.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence, Tuple

import numpy as np

from .errors import DomainError

Vec2 = Tuple[float, float]
PointMap = Callable[[Vec2], Sequence[float]]

MACHINE_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class Tolerances:
    """Numerical tolerances for a run.

    ``fd_step`` should satisfy ``fd_step**2 >= MACHINE_EPS`` so that the
    truncation error of central differences does not dominate rounding;
    the default 1e-5 gives truncation ~1e-10 and rounding ~1e-11.
    """

    jacobian_tol: float = 1e-7
    conservation_tol: float = 1e-11
    roundtrip_tol: float = 1e-10
    newton_tol: float = 1e-12
    fd_step: float = 1e-5

    def __post_init__(self):
        for name in ("jacobian_tol", "conservation_tol", "roundtrip_tol",
                     "newton_tol", "fd_step"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ValueError(f"tolerance {name} must be positive, got {value}")

    def as_dict(self) -> dict:
        return {
            "jacobian_tol": self.jacobian_tol,
            "conservation_tol": self.conservation_tol,
            "roundtrip_tol": self.roundtrip_tol,
            "newton_tol": self.newton_tol,
            "fd_step": self.fd_step,
        }


DEFAULT_TOLERANCES = Tolerances()


def mat2(a: float, b: float, c: float, d: float) -> np.ndarray:
    """Row-major 2x2 matrix ``[[a, b], [c, d]]``."""
    return np.array([[a, b], [c, d]], dtype=float)


def det2(m) -> float:
    return float(m[0][0] * m[1][1] - m[0][1] * m[1][0])


def norm2(m) -> float:
    """Spectral norm of a 2x2 matrix in closed form."""
    a, b = float(m[0][0]), float(m[0][1])
    c, d = float(m[1][0]), float(m[1][1])
    s = a * a + b * b + c * c + d * d
    dt = abs(a * d - b * c)
    # largest singular value: sqrt((s + sqrt(s^2 - 4 det^2)) / 2)
    disc = max(s * s - 4.0 * dt * dt, 0.0)
    return math.sqrt(0.5 * (s + math.sqrt(disc)))


def jacobian_fd(fmap: PointMap, p: Vec2, h: float = 1e-5) -> np.ndarray:
    """Central-difference Jacobian of ``fmap`` at ``p``.

    Column ``j`` is ``(fmap(p + h e_j) - fmap(p - h e_j)) / 2h``.  If the map
    rejects a stencil point, a :class:`DomainError` naming that point is
    raised.
    """
    x, y = float(p[0]), float(p[1])
    stencil = ((x + h, y), (x - h, y), (x, y + h), (x, y - h))
    images = []
    for q in stencil:
        try:
            images.append(np.asarray(fmap(q), dtype=float))
        except DomainError as exc:
            raise DomainError(f"stencil point {q} outside map domain: {exc}", point=q) from exc
    jac = np.empty((2, 2))
    jac[:, 0] = (images[0] - images[1]) / (2.0 * h)
    jac[:, 1] = (images[2] - images[3]) / (2.0 * h)
    return jac


def jacobian_fd_frame(fmap: PointMap, p: Vec2, frame, h: float = 1e-5, period=None) -> np.ndarray:
    """Central differences of ``fmap`` along the columns of ``frame``: ``Df(p) @ frame``.

    Useful when ``Df`` is ill-conditioned in the coordinate directions but
    not along a frame adapted to the map (e.g. flow direction and energy
    gradient); ``det Df = det(result) / det(frame)``.  ``period`` optionally
    gives per-component periods of the image, differences being wrapped.
    """
    p = np.asarray(p, dtype=float)
    frame = np.asarray(frame, dtype=float)
    jac = np.empty((2, 2))
    for j in range(2):
        plus = np.asarray(fmap(tuple(p + h * frame[:, j])), dtype=float)
        minus = np.asarray(fmap(tuple(p - h * frame[:, j])), dtype=float)
        diff = plus - minus
        if period is not None:
            per = np.asarray(period, dtype=float)
            wrap_ = np.isfinite(per)
            diff[wrap_] = (diff[wrap_] + 0.5 * per[wrap_]) % per[wrap_] - 0.5 * per[wrap_]
        jac[:, j] = diff / (2.0 * h)
    return jac


def area_defect(fmap: PointMap, p: Vec2, h: float = 1e-5) -> float:
    """``|det Df(p)| - 1`` using :func:`jacobian_fd`."""
    return abs(det2(jacobian_fd(fmap, p, h))) - 1.0


def bisect_crossing(g: Callable[[float], float], t_lo: float, t_hi: float,
                    tol: float = 1e-12, max_iter: int = 200) -> float:
    """Locate a sign change of ``g`` in ``[t_lo, t_hi]`` by bisection.

    Requires ``g(t_lo)`` and ``g(t_hi)`` of opposite sign (or one of them
    zero).  Returns the midpoint of the final bracket, whose width is below
    ``tol``.
    """
    g_lo = g(t_lo)
    if g_lo == 0.0:
        return t_lo
    g_hi = g(t_hi)
    if g_hi == 0.0:
        return t_hi
    if (g_lo > 0) == (g_hi > 0):
        raise DomainError(f"no sign change of crossing function on [{t_lo}, {t_hi}]")
    for _ in range(max_iter):
        if t_hi - t_lo <= tol:
            break
        mid = 0.5 * (t_lo + t_hi)
        g_mid = g(mid)
        if g_mid == 0.0:
            return mid
        if (g_mid > 0) == (g_lo > 0):
            t_lo, g_lo = mid, g_mid
        else:
            t_hi = mid
    return 0.5 * (t_lo + t_hi)
