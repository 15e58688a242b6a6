"""Symplectic polar blow-up and blow-down.

A collar point ``(theta, r)`` with ``r >= 0`` sits at distance
``sqrt(2 r / pi)`` from the blown-up center, at polar angle ``pi * theta``
measured in the chart frame.  On a period-2 chart the angle covers the full
circle once.  A period-1 chart keeps the same formula on ``theta in [0, 1)``:
the half-turn ``theta -> theta + 1`` is the involution -id, which the
quotient already identifies, so the chart is single valued downstairs and
still area preserving.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from .errors import RangeError, SingularityError


def wrap(theta: float, period: float) -> float:
    """Normalize an angle to ``[0, period)``."""
    w = math.fmod(theta, period)
    if w < 0.0:
        w += period
    return 0.0 if w >= period else w


@dataclass(frozen=True)
class CollarPoint:
    theta: float
    r: float
    period: int = 1

    def __post_init__(self):
        if self.period not in (1, 2):
            raise ValueError(f"period must be 1 or 2, got {self.period}")
        object.__setattr__(self, "theta", wrap(float(self.theta), self.period))
        object.__setattr__(self, "r", float(self.r))

    def __iter__(self):
        yield self.theta
        yield self.r


@dataclass(frozen=True)
class BlowupChart:
    center: Tuple[float, float] = (0.0, 0.0)
    frame: np.ndarray = field(default_factory=lambda: np.eye(2))
    epsilon: float = 0.01
    period: int = 2

    def __post_init__(self):
        frame = np.asarray(self.frame, dtype=float)
        if frame.shape != (2, 2) or not np.allclose(frame.T @ frame, np.eye(2), atol=1e-12):
            raise ValueError("frame must be an orthogonal 2x2 matrix")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.period not in (1, 2):
            raise ValueError("period must be 1 or 2")
        object.__setattr__(self, "frame", frame)

    @property
    def radius(self) -> float:
        return math.sqrt(2.0 * self.epsilon / math.pi)


def polar_offset(theta: float, r: float) -> Tuple[float, float]:
    """Frame-local offset ``sqrt(2r/pi) (cos pi theta, sin pi theta)`` for ``r >= 0``."""
    rho = math.sqrt(2.0 * r / math.pi)
    return rho * math.cos(math.pi * theta), rho * math.sin(math.pi * theta)


def project(c: BlowupChart, p, check: bool = True) -> Tuple[float, float]:
    """Blow-down map of the chart: collar point to planar point."""
    theta, r = p
    period = getattr(p, "period", c.period)
    if period != c.period:
        raise RangeError(f"point period {period} does not match chart period {c.period}")
    if r < 0.0 or (check and r > c.epsilon):
        raise RangeError(f"r={r} outside [0, {c.epsilon}]")
    u, v = polar_offset(wrap(theta, c.period), r)
    f = c.frame
    return (c.center[0] + f[0, 0] * u + f[0, 1] * v,
            c.center[1] + f[1, 0] * u + f[1, 1] * v)


def lift(c: BlowupChart, v, check: bool = True) -> CollarPoint:
    """Inverse of :func:`project` on the punctured disk of radius ``sqrt(2 eps / pi)``."""
    dx, dy = v[0] - c.center[0], v[1] - c.center[1]
    f = c.frame
    u = f[0, 0] * dx + f[1, 0] * dy
    w = f[0, 1] * dx + f[1, 1] * dy
    d2 = u * u + w * w
    if d2 == 0.0:
        raise SingularityError("angle undefined at the blow-up center")
    r = 0.5 * math.pi * d2
    if check and r > c.epsilon * (1.0 + 1e-12):
        raise RangeError(f"point at distance {math.sqrt(d2)} beyond chart radius {c.radius}")
    theta = math.atan2(w, u) / math.pi
    return CollarPoint(theta, r, c.period)


def blow_down(p, center=(0.0, 0.0)) -> Tuple[float, float]:
    """Period-1 blow-down ``(theta, r) -> center + sqrt(r/pi) (cos 2 pi theta, sin 2 pi theta)``."""
    theta, r = p
    if getattr(p, "period", 1) != 1:
        raise RangeError("blow_down expects a period-1 point")
    if r < 0.0:
        raise RangeError(f"r={r} must be non-negative")
    rho = math.sqrt(r / math.pi)
    a = 2.0 * math.pi * theta
    return center[0] + rho * math.cos(a), center[1] + rho * math.sin(a)


def blow_up(v, center=(0.0, 0.0)) -> CollarPoint:
    """Inverse of :func:`blow_down` away from the center."""
    dx, dy = v[0] - center[0], v[1] - center[1]
    d2 = dx * dx + dy * dy
    if d2 == 0.0:
        raise SingularityError("angle undefined at the blow-down center")
    return CollarPoint(math.atan2(dy, dx) / (2.0 * math.pi), math.pi * d2, 1)


def project_jacobian(c: BlowupChart, theta: float, r: float) -> np.ndarray:
    """Analytic differential of :func:`project` in ``(theta, r)`` (r > 0)."""
    rho = math.sqrt(2.0 * r / math.pi)
    ang = math.pi * theta
    ca, sa = math.cos(ang), math.sin(ang)
    drho = 1.0 / (math.pi * rho)
    local = np.array([[-math.pi * rho * sa, drho * ca],
                      [math.pi * rho * ca, drho * sa]])
    return c.frame @ local
