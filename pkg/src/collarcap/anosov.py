"""The linear Anosov layer on the torus R^2/Z^2 and its quotient by -id."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Tuple

import numpy as np

MATRIX = ((13, 8), (8, 5))
INVERSE = ((5, -8), (-8, 13))
FIXED_POINTS: Tuple[Tuple[float, float], ...] = ((0.0, 0.0), (0.5, 0.0), (0.0, 0.5), (0.5, 0.5))

#: log of the expanding eigenvalue 9 + 4*sqrt(5)
LAMBDA = math.log(9.0 + 4.0 * math.sqrt(5.0))


def reduce(v: float) -> float:
    """Reduce a real to [0, 1)."""
    w = v - math.floor(v)
    # floor can leave exactly 1.0 for tiny negative inputs
    return 0.0 if w >= 1.0 else w


@dataclass(frozen=True)
class TorusPoint:
    x: float
    y: float

    def __post_init__(self):
        object.__setattr__(self, "x", reduce(self.x))
        object.__setattr__(self, "y", reduce(self.y))

    def __iter__(self):
        yield self.x
        yield self.y


@dataclass(frozen=True)
class AnosovData:
    matrix: np.ndarray
    lam: float
    rotation: np.ndarray
    fixed_points: Tuple[TorusPoint, ...]


@lru_cache(maxsize=None)
def eigen_data() -> AnosovData:
    """Eigen-decomposition ``A = R diag(e^lam, e^-lam) R^T`` with ``det R = +1``."""
    slope = (math.sqrt(5.0) - 1.0) / 2.0
    n = math.hypot(1.0, slope)
    u = (1.0 / n, slope / n)
    s = (-u[1], u[0])
    rotation = np.array([[u[0], s[0]], [u[1], s[1]]])
    return AnosovData(
        matrix=np.array(MATRIX, dtype=float),
        lam=LAMBDA,
        rotation=rotation,
        fixed_points=tuple(TorusPoint(*p) for p in FIXED_POINTS),
    )


def apply(p, inverse: bool = False) -> TorusPoint:
    """Image of ``p`` under A (or A^-1), reduced mod 1."""
    x, y = p
    (a, b), (c, d) = INVERSE if inverse else MATRIX
    return TorusPoint(a * x + b * y, c * x + d * y)


def involution(p) -> TorusPoint:
    x, y = p
    return TorusPoint(-x, -y)


def quotient_rep(p) -> TorusPoint:
    """Lexicographically smaller of ``p`` and ``-p`` (mod 1)."""
    q = p if isinstance(p, TorusPoint) else TorusPoint(*p)
    r = involution(q)
    return q if (q.x, q.y) <= (r.x, r.y) else r


def quotient_rep_flip(x: float, y: float) -> Tuple[float, float, bool]:
    """Like :func:`quotient_rep` on raw floats; also reports whether -id was applied."""
    x, y = reduce(x), reduce(y)
    nx, ny = reduce(-x), reduce(-y)
    if (x, y) <= (nx, ny):
        return x, y, False
    return nx, ny, True


def quotient_rep_array(x: np.ndarray, y: np.ndarray):
    """Vectorized :func:`quotient_rep_flip`; returns ``(x, y, flipped)``."""
    x = np.mod(x, 1.0)
    y = np.mod(y, 1.0)
    x = np.where(x >= 1.0, 0.0, x)
    y = np.where(y >= 1.0, 0.0, y)
    nx = np.mod(-x, 1.0)
    ny = np.mod(-y, 1.0)
    nx = np.where(nx >= 1.0, 0.0, nx)
    ny = np.where(ny >= 1.0, 0.0, ny)
    flip = (nx < x) | ((nx == x) & (ny < y))
    return np.where(flip, nx, x), np.where(flip, ny, y), flip


def torus_offset(x: float, y: float, px: float, py: float) -> Tuple[float, float]:
    """Shortest displacement from ``P`` to the class of ``(x, y)`` in the quotient.

    Since P is 2-torsion, ``-P = P`` mod 1 and both ``z`` and ``-z`` are
    candidates; the shorter displacement is returned.
    """
    dx = x - px
    dy = y - py
    dx -= round(dx)
    dy -= round(dy)
    # -z - P = -(z - P) - 2P and 2P is a lattice vector, so the other
    # candidate is simply the negated displacement; same length.
    return dx, dy
