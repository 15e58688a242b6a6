"""Collar and normal-form Hamiltonians on strip coordinates and their flows.

All systems share the form ``H(theta, r) = Lambda(s)`` with
``s = (r / pi) sin(2 pi w theta)``, where ``Lambda`` is the primitive of a
polynomial rate profile ``lambda(s)`` and ``w`` the angular wavenumber.  The
collar Hamiltonian is the constant-profile case.  The strip carries the
area form ``dr ^ dtheta`` (the pull-back of ``dx ^ dy`` under the blow-up),
so the equations of motion are::

    theta' = -dH/dr,    r' = dH/dtheta

which makes ``{theta = 0}`` the expanding axis at the saddle ``(0, 0)`` for
both signs of ``r``.

Because ``s`` is conserved, every orbit is the image of a hyperbolic linear
flow with constant rate ``mu = w lambda(s)``; :func:`flow` evaluates it in
closed form through the angle ``psi = pi w theta``:
``tan psi(t) = exp(-2 mu t) tan psi`` and
``r(t) = r (exp(2 mu t) cos^2 psi + exp(-2 mu t) sin^2 psi)``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .anosov import LAMBDA
from .blowup import CollarPoint, wrap
from .errors import EscapeError, RangeError


@dataclass(frozen=True)
class Profile:
    """Polynomial rate ``lambda(s) = sum c_j s^j`` valid for ``|s| <= validity_radius``."""

    coefficients: Tuple[float, ...] = (LAMBDA,)
    validity_radius: float = 1.0

    def __post_init__(self):
        coeffs = tuple(float(c) for c in self.coefficients)
        if not coeffs or not all(math.isfinite(c) for c in coeffs):
            raise ValueError("profile coefficients must be finite and non-empty")
        if coeffs[0] <= 0.0:
            raise ValueError("lambda(0) must be positive (hyperbolic saddle)")
        if not self.validity_radius > 0:
            raise ValueError("validity_radius must be positive")
        object.__setattr__(self, "coefficients", coeffs)

    @property
    def is_constant(self) -> bool:
        return all(c == 0.0 for c in self.coefficients[1:])

    def rate(self, s):
        return np.polynomial.polynomial.polyval(s, self.coefficients)

    def rate_prime(self, s):
        return np.polynomial.polynomial.polyval(s, np.polynomial.polynomial.polyder(self.coefficients))

    def primitive(self) -> "PrimitiveProfile":
        return PrimitiveProfile(tuple(np.polynomial.polynomial.polyint(self.coefficients)))

    def to_json(self) -> str:
        return json.dumps({"coefficients": list(self.coefficients),
                           "validity_radius": self.validity_radius})

    @classmethod
    def from_json(cls, text: str) -> "Profile":
        data = json.loads(text)
        if isinstance(data, list):
            return cls(tuple(data))
        return cls(tuple(data["coefficients"]), float(data.get("validity_radius", 1.0)))


@dataclass(frozen=True)
class PrimitiveProfile:
    """Coefficients of ``Lambda(s) = int_0^s lambda``; ``Lambda(0) = 0``."""

    coefficients: Tuple[float, ...]

    def __call__(self, s):
        return np.polynomial.polynomial.polyval(s, self.coefficients)

    def derivative(self) -> Tuple[float, ...]:
        return tuple(np.polynomial.polynomial.polyder(self.coefficients))

    def inverse(self, energy: float, rate0: float) -> float:
        """Solve ``Lambda(s) = energy`` near 0 by Newton's method."""
        if len(self.coefficients) <= 2:
            return energy / self.coefficients[1]
        s = energy / rate0
        der = self.derivative()
        for _ in range(60):
            f = float(self(s)) - energy
            d = float(np.polynomial.polynomial.polyval(s, der))
            step = f / d
            s -= step
            if abs(step) <= 1e-17 + 1e-15 * abs(s):
                break
        return s


@dataclass(frozen=True)
class HamiltonianSystem:
    kind: str = "collar"
    profile: Profile = Profile()
    period: int = 1
    wavenumber: float = 1.0

    def __post_init__(self):
        if self.kind not in ("collar", "moser"):
            raise ValueError(f"unknown Hamiltonian kind {self.kind!r}")
        if self.kind == "collar" and not self.profile.is_constant:
            raise ValueError("collar kind requires a constant profile")
        if self.period not in (1, 2):
            raise ValueError("period must be 1 or 2")
        if not self.wavenumber > 0:
            raise ValueError("wavenumber must be positive")
        object.__setattr__(self, "_primitive", self.profile.primitive())

    @property
    def primitive(self) -> PrimitiveProfile:
        return self._primitive  # type: ignore[attr-defined]

    @property
    def saddle_count(self) -> int:
        n = 2.0 * self.wavenumber * self.period
        return int(round(n))

    def saddles(self) -> list:
        """Zeros of the Hamiltonian vector field on ``r = 0``: ``theta_j = j / (2 w)``."""
        return [CollarPoint(j / (2.0 * self.wavenumber), 0.0, self.period)
                for j in range(self.saddle_count)]

    def invariant(self, theta, r):
        """The conserved product ``s = (r / pi) sin(2 pi w theta)``."""
        return r / math.pi * np.sin(2.0 * math.pi * self.wavenumber * theta)

    def energy_of_invariant(self, s):
        return self.primitive(s)

    def invariant_of_energy(self, energy: float) -> float:
        return self.primitive.inverse(energy, self.profile.coefficients[0])

    def rate(self, s):
        """Hyperbolic rate ``mu = w lambda(s)`` of the orbit with invariant ``s``."""
        return self.wavenumber * self.profile.rate(s)

    def check_invariant(self, s):
        if self.kind == "moser" and np.any(np.abs(s) > self.profile.validity_radius):
            raise RangeError(f"|s| beyond validity radius {self.profile.validity_radius}")


def _coords(p) -> Tuple[float, float]:
    return float(p[0]), float(p[1])


def value(sys: HamiltonianSystem, p) -> float:
    theta, r = _coords(p)
    s = sys.invariant(theta, r)
    sys.check_invariant(s)
    return float(sys.energy_of_invariant(s))


def gradient(sys: HamiltonianSystem, p) -> Tuple[float, float]:
    """``(dH/dtheta, dH/dr)``."""
    theta, r = _coords(p)
    s = sys.invariant(theta, r)
    sys.check_invariant(s)
    lam = float(sys.profile.rate(s))
    a = 2.0 * math.pi * sys.wavenumber * theta
    return (lam * (r / math.pi) * 2.0 * math.pi * sys.wavenumber * math.cos(a),
            lam * math.sin(a) / math.pi)


def as_real(x):
    """Array view of ``x`` as floating point, keeping extended precision if given."""
    a = np.asarray(x)
    return a.astype(np.result_type(a.dtype, np.float64), copy=False)


def flow_arrays(sys: HamiltonianSystem, theta, r, t):
    """Closed-form flow on arrays; returns unwrapped ``(theta', r')``."""
    theta = as_real(theta)
    r = as_real(r)
    w = sys.wavenumber
    psi = math.pi * w * theta
    c = np.cos(psi)
    sn = np.sin(psi)
    s = r / math.pi * 2.0 * sn * c
    mu_t = sys.rate(s) * t
    ep = np.exp(mu_t)
    em = np.exp(-mu_t)
    g = ep * ep * c * c + em * em * sn * sn
    dpsi = np.arctan2(sn * c * (em - ep), ep * c * c + em * sn * sn)
    return theta + dpsi / (math.pi * w), r * g


def flow_jacobian(sys: HamiltonianSystem, theta: float, r: float, t: float) -> np.ndarray:
    """Analytic differential of :func:`flow_arrays` in ``(theta, r)``."""
    w = sys.wavenumber
    psi = math.pi * w * theta
    c, sn = math.cos(psi), math.sin(psi)
    s = r / math.pi * 2.0 * sn * c
    mu = float(sys.rate(s))
    e2p, e2m = math.exp(2.0 * mu * t), math.exp(-2.0 * mu * t)
    g = e2p * c * c + e2m * sn * sn
    sin2 = 2.0 * sn * c
    cos2 = c * c - sn * sn
    # image angle
    psi1 = psi + math.atan2(sn * c * (math.exp(-mu * t) - math.exp(mu * t)),
                            math.exp(mu * t) * c * c + math.exp(-mu * t) * sn * sn)
    dth_dth = 1.0 / g
    dr_dth = r * sin2 * (e2m - e2p) * math.pi * w
    dr_dr = g
    dth_dmu = -t * math.sin(2.0 * psi1) / (math.pi * w)
    dr_dmu = r * 2.0 * t * (e2p * c * c - e2m * sn * sn)
    lp = float(sys.profile.rate_prime(s))
    dmu_dth = w * lp * (r / math.pi) * 2.0 * math.pi * w * cos2
    dmu_dr = w * lp * sin2 / math.pi
    return np.array([[dth_dth + dth_dmu * dmu_dth, dth_dmu * dmu_dr],
                     [dr_dth + dr_dmu * dmu_dth, dr_dr + dr_dmu * dmu_dr]])


def exit_time(sys: HamiltonianSystem, theta: float, r: float, level: float, forward: bool = True) -> float:
    """Time at which ``r(t)`` reaches ``level`` (same sign as ``r``), closed form.

    Returns ``inf`` (or ``-inf`` backwards) if the orbit never gets there.
    ``r(t) / r = X c^2 + s^2 / X`` with ``X = exp(2 mu t)`` is a quadratic in
    ``X``; the larger root is the forward crossing, the smaller the backward
    one.
    """
    return float(exit_time_arrays(sys, np.asarray(theta), np.asarray(r), level, forward))


def exit_time_arrays(sys: HamiltonianSystem, theta, r, level: float, forward: bool = True):
    theta = as_real(theta)
    r = as_real(r)
    w = sys.wavenumber
    psi = math.pi * w * theta
    c = np.cos(psi)
    sn = np.sin(psi)
    s = r / math.pi * 2.0 * sn * c
    mu = sys.rate(s)
    with np.errstate(divide="ignore", invalid="ignore"):
        G = level / r
        disc = np.sqrt(np.maximum(G * G - 4.0 * c * c * sn * sn, 0.0))
        if forward:
            X = (G + disc) / (2.0 * c * c)
            out = np.where(c == 0.0, np.inf, np.log(X) / (2.0 * mu))
        else:
            X = 2.0 * sn * sn / (G + disc)
            out = np.where(sn == 0.0, -np.inf, np.log(X) / (2.0 * mu))
        out = np.where((r == 0.0) | (G <= 0.0), np.inf if forward else -np.inf, out)
    return out


def flow(sys: HamiltonianSystem, p, t: float, band: Optional[Tuple[float, float]] = None) -> CollarPoint:
    """Time-``t`` map of the Hamiltonian flow.

    If ``band = (r_lo, r_hi)`` is given and the trajectory leaves it within
    time ``t``, :class:`EscapeError` is raised with the exit time and point.
    """
    theta, r = _coords(p)
    sys.check_invariant(sys.invariant(theta, r))
    if band is not None and r != 0.0:
        level = band[0] if r < 0 else band[1]
        te = exit_time(sys, theta, r, level, forward=t >= 0)
        if (t >= 0 and te <= t) or (t < 0 and te >= t):
            th_e, r_e = flow_arrays(sys, theta, r, te)
            raise EscapeError(f"trajectory leaves band {band} at t={te}", te,
                              CollarPoint(float(th_e), float(r_e), sys.period))
    th1, r1 = flow_arrays(sys, theta, r, t)
    return CollarPoint(float(th1), float(r1), sys.period)


def time_one(sys: HamiltonianSystem, p, band=None) -> CollarPoint:
    return flow(sys, p, 1.0, band)


def moser_map(profile: Profile, v) -> Tuple[float, float]:
    """``(x, y) -> (exp(lambda(xy)) x, exp(-lambda(xy)) y)``."""
    x, y = float(v[0]), float(v[1])
    s = x * y
    if abs(s) > profile.validity_radius:
        raise RangeError(f"|xy|={abs(s)} beyond validity radius")
    lam = float(profile.rate(s))
    return math.exp(lam) * x, math.exp(-lam) * y


def vector_field(sys: HamiltonianSystem, theta: float, r: float) -> Tuple[float, float]:
    dth, dr = gradient(sys, (theta, r))
    return -dr, dth


def integrate(sys: HamiltonianSystem, p, t: float, h0: float = 0.02,
              drift_tol: float = 1e-8, min_step: float = 1e-7) -> CollarPoint:
    """Implicit-midpoint integration with step halving on energy drift.

    Fallback for profiles without a closed form; a step is accepted when the
    energy change is below ``drift_tol * |h|`` (so drift < drift_tol per unit
    time).
    """
    theta, r = _coords(p)
    if t == 0.0:
        return CollarPoint(theta, r, sys.period)
    sign = 1.0 if t > 0 else -1.0
    remaining = abs(t)
    h = min(h0, remaining)
    energy = value(sys, (theta, r))
    while remaining > 1e-15:
        h = min(h, remaining)
        while True:
            hs = sign * h
            mt, mr = theta, r
            for _ in range(100):
                ft, fr = vector_field(sys, mt, mr)
                nt, nr = theta + 0.5 * hs * ft, r + 0.5 * hs * fr
                done = abs(nt - mt) + abs(nr - mr) < 1e-16
                mt, mr = nt, nr
                if done:
                    break
            cand_t, cand_r = 2.0 * mt - theta, 2.0 * mr - r
            e1 = value(sys, (cand_t, cand_r))
            if abs(e1 - energy) <= drift_tol * h or h <= min_step:
                break
            h *= 0.5
        theta, r, energy = cand_t, cand_r, e1
        remaining -= h
        h = min(2.0 * h, h0)
    return CollarPoint(wrap(theta, sys.period), r, sys.period)
