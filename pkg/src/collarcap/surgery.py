"""Integrable caps: strip, energy-time gluing, action-angle charts, blow-down.

Coordinates on the strip are ``(theta, r)`` with ``r in [-eta, 0]`` and
``theta`` on the circle of the system's period.  The saddles sit at
``theta_j = j / (2 w)`` on ``r = 0``; even saddles carry the outgoing legs
(the expanding axis leaves the circle), odd saddles the incoming ones.
Sector ``j`` is the arc between ``theta_j`` and ``theta_{j+1}``: orbits in
it enter through the leg at its odd end and exit through the leg at its
even end.  Exits through ``Sigma_out,i`` (at ``Q_{2i}``) are glued, energy
by energy, to entries through ``Sigma_in,i`` (at ``Q_{2i+1}``) with a one
unit time overlap.  In the glued strip, negative-energy orbits close up
within a single even sector and all positive-energy orbits chain through
the odd sectors, giving ``k + 1`` families of closed orbits.

Each family is parametrized by a clock ``c in [0, T(E))`` measured from the
end of its first in-strip, and its energy ``E``.  ``(c, E)`` are canonical,
so ``Theta = sigma c / T(E)`` with the action ``A(E) = int T dE`` (measured
from the family's inner circle ``|E| = eta^3``) is a symplectic chart in
which the time-one map is a rigid rotation.  Blowing down ``A = 0`` gives
the elliptic disk chart ``(x, y) = sqrt(A/pi) (cos 2 pi Theta, sin 2 pi Theta)``.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate, optimize
from scipy.interpolate import CubicHermiteSpline, CubicSpline

from . import hamiltonian as ham
from .blowup import wrap
from .errors import (ConstructionError, DomainError, NotClosedError, RangeError,
                     StructureError)
from .geometry import bisect_crossing

log = logging.getLogger(__name__)

STRIP = -1  # family index used for points in strip coordinates


@dataclass(frozen=True)
class Strip:
    sys: ham.HamiltonianSystem
    eta: float
    k: int
    sigma_out: Tuple[Tuple[float, float], ...]
    sigma_in: Tuple[Tuple[float, float], ...]
    boundary_pieces: int

    @property
    def level(self) -> float:
        return self.eta ** 3

    @property
    def period(self) -> int:
        return self.sys.period

    @property
    def nsaddles(self) -> int:
        return 2 * self.k

    def saddle_theta(self, j):
        return np.asarray(j) / (2.0 * self.sys.wavenumber)

    # -- sector bookkeeping -------------------------------------------------
    def sector_of(self, theta):
        th = np.mod(ham.as_real(theta), self.period)
        j = np.floor(th * 2.0 * self.sys.wavenumber).astype(int)
        return np.mod(j, self.nsaddles)

    def out_saddle(self, sector):
        sector = np.asarray(sector)
        return np.where(sector % 2 == 0, sector, sector + 1) % self.nsaddles

    def in_saddle(self, sector):
        sector = np.asarray(sector)
        return np.where(sector % 2 == 1, sector, sector + 1) % self.nsaddles

    def sigma_theta(self, saddle, s):
        """Point of ``Sigma`` near saddle ``j`` with invariant ``s`` (on ``r = -eta``)."""
        saddle = np.asarray(saddle)
        sign = np.where(saddle % 2 == 0, 1.0, -1.0)
        w = self.sys.wavenumber
        arg = np.clip(-sign * math.pi * np.asarray(s) / self.eta, -1.0, 1.0)
        return saddle / (2.0 * w) + np.arcsin(arg) / (2.0 * math.pi * w)

    def invariant_of_energy(self, energy):
        energy = ham.as_real(energy)
        if self.sys.profile.is_constant:
            return energy / self.sys.profile.coefficients[0]
        return np.vectorize(self.sys.invariant_of_energy, otypes=[float])(energy)

    def energy(self, theta, r):
        return self.sys.energy_of_invariant(self.sys.invariant(theta, r))

    def transit(self, saddle_in, s):
        """Time from ``Sigma_in`` (at odd ``saddle_in``) to ``Sigma_out`` at invariant ``s``."""
        th = self.sigma_theta(saddle_in, s)
        r = np.full(np.shape(th), -self.eta)
        return ham.exit_time_arrays(self.sys, th, r, -self.eta, forward=True)

    def in_strip_time(self, theta, r):
        """Time elapsed since crossing ``Sigma_in`` (``inf`` if never crossed)."""
        return -ham.exit_time_arrays(self.sys, theta, r, -self.eta, forward=False)

    def out_strip_time(self, theta, r):
        """Time left until crossing ``Sigma_out`` (``inf`` if never)."""
        return ham.exit_time_arrays(self.sys, theta, r, -self.eta, forward=True)

    def contains(self, theta, r, slack: float = 0.0):
        r = np.asarray(r)
        e = np.abs(self.energy(theta, r))
        return (r <= slack) & (r >= -self.eta - slack) & (e <= self.level * (1 + 1e-12) + slack)


def build_strip(sys: ham.HamiltonianSystem, eta: float, k: int) -> Strip:
    """Locate the ``2k`` Sigma components and validate the strip structure."""
    if not eta > 0:
        raise ValueError("eta must be positive")
    if sys.saddle_count != 2 * k:
        raise StructureError(f"system has {sys.saddle_count} saddles, expected {2 * k}")
    sys.check_invariant(eta / math.pi)
    level = eta ** 3
    period = sys.period

    # saddles: zeros of the vector field on r = 0, found on a fine grid
    grid = np.linspace(0.0, period, 4096 * 2 * k, endpoint=False)
    g = np.sin(2.0 * math.pi * sys.wavenumber * grid)
    found = []
    for a, b, ga, gb in zip(grid, np.roll(grid, -1), g, np.roll(g, -1)):
        if ga == 0.0:
            found.append(a)
        elif ga * gb < 0:
            hi = b if b > a else b + period
            found.append(optimize.brentq(lambda t: math.sin(2 * math.pi * sys.wavenumber * t), a, hi))
    if len(found) != 2 * k:
        raise StructureError(f"detected {len(found)} saddles on r=0, expected {2 * k}")

    def h_bottom(t):
        return ham.value(sys, (t, -eta))

    sig_out, sig_in, comps = [], [], 0
    half = 1.0 / (4.0 * sys.wavenumber)
    for j, tj in enumerate(found):
        lo = optimize.brentq(lambda t: abs(h_bottom(t)) - level, tj - half, tj)
        hi = optimize.brentq(lambda t: abs(h_bottom(t)) - level, tj, tj + half)
        samples = np.array([h_bottom(t) for t in np.linspace(lo, hi, 33)])
        d = np.diff(samples)
        if not (np.all(d > 0) or np.all(d < 0)):
            raise StructureError(f"H is not monotone on Sigma component {j}")
        comps += 1
        (sig_out if j % 2 == 0 else sig_in).append((lo, hi))

    # components of {|H(., -eta)| <= eta^3} on a scan must match the saddles
    scan = np.linspace(0.0, period, 200000, endpoint=False)
    inside = np.abs(sys.energy_of_invariant(sys.invariant(scan, -eta))) <= level
    runs = int(np.count_nonzero(inside & ~np.roll(inside, 1)))
    if runs != 2 * k or comps != 2 * k:
        raise StructureError(f"found {runs} Sigma components, expected {2 * k}")

    # each sector carries one arc of |H| = eta^3 joining its two Sigma corners
    arcs = 0
    for j in range(2 * k):
        mid = (found[j] + (found[(j + 1) % (2 * k)] + (period if j == 2 * k - 1 else 0.0))) / 2.0
        s_edge = sys.invariant_of_energy(math.copysign(level, h_bottom(mid)))
        r_mid = math.pi * s_edge / math.sin(2.0 * math.pi * sys.wavenumber * mid)
        if -eta < r_mid < 0:
            arcs += 1
    pieces = comps + arcs + 1
    strip = Strip(sys, eta, k, tuple(sig_out), tuple(sig_in), pieces)

    tau_min = float(np.min(strip.transit(np.arange(1, 2 * k, 2), strip.invariant_of_energy(level))))
    tau_min = min(tau_min, float(np.min(strip.transit(np.arange(1, 2 * k, 2),
                                                      strip.invariant_of_energy(-level)))))
    if not tau_min > 2.0:
        raise StructureError(
            f"minimal transit time {tau_min:.3f} <= 2: glue strips would overlap; "
            "decrease eta or the hyperbolic rate")
    return strip


# -- gluing ------------------------------------------------------------------

def glue_map(strip: Strip, i: int, p) -> Tuple[float, float]:
    """Energy-time transport from the out-flow strip of pair ``i`` to its in-flow strip."""
    theta, r = float(p[0]), float(p[1])
    e = float(strip.energy(theta, r))
    if abs(e) > strip.level * (1 + 1e-12):
        raise RangeError(f"energy {e} outside [-eta^3, eta^3]")
    sector = int(strip.sector_of(theta))
    t_out = float(strip.out_strip_time(theta, r))
    # points on Sigma_out itself may come out a rounding error below zero
    if int(strip.out_saddle(sector)) // 2 != i or not (-1e-12 <= t_out <= 1.0) or r > 0:
        raise DomainError(f"point {p} is not in the out-flow strip of pair {i}")
    t_out = max(t_out, 0.0)
    s = strip.invariant_of_energy(e)
    th_in = float(strip.sigma_theta(2 * i + 1, s))
    th1, r1 = ham.flow_arrays(strip.sys, th_in, -strip.eta, 1.0 - t_out)
    return wrap(float(th1), strip.period), float(r1)


def glue_inverse(strip: Strip, p) -> Tuple[float, float]:
    theta, r = float(p[0]), float(p[1])
    t_in = float(strip.in_strip_time(theta, r))
    if not (0.0 <= t_in <= 1.0):
        raise DomainError(f"point {p} is not in an in-flow strip")
    sector = int(strip.sector_of(theta))
    j_in = int(strip.in_saddle(sector))
    s = strip.invariant_of_energy(strip.energy(theta, r))
    th_out = float(strip.sigma_theta(j_in - 1, s))
    th1, r1 = ham.flow_arrays(strip.sys, th_out, -strip.eta, t_in - 1.0)
    return wrap(float(th1), strip.period), float(r1)


def normalize_arrays(strip: Strip, theta, r):
    """Map in-strip points to their out-strip partners (vectorized)."""
    theta = ham.as_real(theta)
    r = ham.as_real(r)
    t_in = strip.in_strip_time(theta, r)
    move = (r < 0) & (t_in < 1.0)
    if np.any(move):
        sector = strip.sector_of(theta[move])
        j_in = strip.in_saddle(sector)
        s = strip.invariant_of_energy(strip.energy(theta[move], r[move]))
        th_out = strip.sigma_theta(j_in - 1, s)
        th1, r1 = ham.flow_arrays(strip.sys, th_out, np.full(th_out.shape, -strip.eta), t_in[move] - 1.0)
        theta = theta.copy()
        r = r.copy()
        theta[move] = th1
        r[move] = r1
    return np.mod(theta, strip.period), r


def quotient_normalize(strip: Strip, p) -> Tuple[float, float]:
    th, r = normalize_arrays(strip, np.array([float(p[0])]), np.array([float(p[1])]))
    return float(th[0]), float(r[0])


def alternate_arrays(strip: Strip, theta, r):
    """The other representative of each point under the gluing, or itself."""
    theta = ham.as_real(theta)
    r = ham.as_real(r)
    th_n, r_n = normalize_arrays(strip, theta, r)
    moved = (th_n != np.mod(theta, strip.period)) | (r_n != r)
    out = strip.out_strip_time(theta, r)
    fwd = ~moved & (r < 0) & (out <= 1.0)
    th_a, r_a = th_n.copy(), r_n.copy()
    if np.any(fwd):
        sector = strip.sector_of(theta[fwd])
        j_out = strip.out_saddle(sector)
        s = strip.invariant_of_energy(strip.energy(theta[fwd], r[fwd]))
        th_in = strip.sigma_theta(j_out + 1, s)
        th1, r1 = ham.flow_arrays(strip.sys, th_in, np.full(th_in.shape, -strip.eta), 1.0 - out[fwd])
        th_a[fwd] = np.mod(th1, strip.period)
        r_a[fwd] = r1
    return th_a, r_a


def strip_step(strip: Strip, theta, r, t: float = 1.0, normalize: bool = True):
    """Glued flow for ``|t| <= 1`` on strip points (any representative)."""
    if abs(t) > 1.0:
        raise ValueError("strip_step handles |t| <= 1; use cap_flow for longer times")
    theta = ham.as_real(theta)
    r = ham.as_real(r)
    if t >= 0:
        t_out = strip.out_strip_time(theta, r)
        jump = (r < 0) & (t_out < t)
        th1, r1 = ham.flow_arrays(strip.sys, theta, r, t)
        if np.any(jump):
            sector = strip.sector_of(theta[jump])
            j_out = strip.out_saddle(sector)
            s = strip.invariant_of_energy(strip.energy(theta[jump], r[jump]))
            th_in = strip.sigma_theta(j_out + 1, s)
            thj, rj = ham.flow_arrays(strip.sys, th_in, np.full(th_in.shape, -strip.eta),
                                      1.0 + t - t_out[jump])
            th1 = th1.copy()
            r1 = r1.copy()
            th1[jump] = thj
            r1[jump] = rj
    else:
        th_n, r_n = normalize_arrays(strip, theta, r)
        th1, r1 = ham.flow_arrays(strip.sys, th_n, r_n, t)
    th1 = np.mod(th1, strip.period)
    if normalize:
        return normalize_arrays(strip, th1, r1)
    return th1, r1


def cap_flow(strip: Strip, p, t: float) -> Tuple[float, float]:
    """Glued flow for arbitrary ``t`` on a single strip point."""
    th = np.array([float(p[0])])
    r = np.array([float(p[1])])
    remaining = float(t)
    while abs(remaining) > 0:
        dt = max(-1.0, min(1.0, remaining))
        th, r = strip_step(strip, th, r, dt)
        remaining -= dt
        if abs(remaining) < 1e-15:
            break
    return float(th[0]), float(r[0])


# -- section data and action-angle ---------------------------------------------

@dataclass(frozen=True)
class SectionData:
    base_point: Tuple[float, float]
    energies: np.ndarray
    periods: np.ndarray
    actions: np.ndarray

    def __post_init__(self):
        if np.any(self.periods <= 0):
            raise ValueError("periods must be positive")

    def spline(self) -> CubicHermiteSpline:
        return CubicHermiteSpline(self.energies, self.actions, self.periods)

    def period(self, energy: float) -> float:
        """Interpolated return time, independent of the action table.

        ``(Theta, A)`` is symplectic iff ``dA/dE`` equals this, which is what
        the area checks of the transform test.
        """
        if len(self.energies) < 4:
            return float(np.interp(energy, self.energies, self.periods))
        return float(CubicSpline(self.energies, self.periods)(energy))

    def action(self, energy: float) -> float:
        return float(self.spline()(energy))

    def energy_of_action(self, action: float) -> float:
        spline = self.spline()
        lo, hi = self.energies[0], self.energies[-1]
        return float(optimize.brentq(lambda e: float(spline(e)) - action, lo, hi, xtol=1e-15))


def first_return_time(flow: Callable, p0, crossing: Callable[[object], float],
                      dt: float = 0.05, t_max: float = 200.0, tol: float = 1e-12,
                      skip_first: bool = True) -> float:
    """Time of the first upward crossing of ``crossing`` along ``flow(p0, t)``.

    With ``skip_first`` (for ``p0`` on the section) crossings within the
    first step are skipped.  Downward crossings (and jumps, which the glued
    flow makes against the flow direction) are ignored.
    """
    t = dt if skip_first else 0.0
    g_prev = crossing(flow(p0, t))
    while t < t_max:
        t_next = t + dt
        g_next = crossing(flow(p0, t_next))
        if g_prev < 0.0 <= g_next:
            return bisect_crossing(lambda s: crossing(flow(p0, s)), t, t_next, tol=tol)
        t, g_prev = t_next, g_next
    raise NotClosedError(f"no return to the section within t={t_max}")


def section_data(flow: Callable, start: Callable[[float], object], crossing: Callable,
                 energies: Sequence[float], period_fn: Optional[Callable[[float], float]] = None,
                 dt: float = 0.05, t_max: float = 200.0) -> SectionData:
    """Return times on an energy grid and the actions ``A(E) = int_{E_0}^E T``.

    ``E_0`` is the first grid energy, or ``0`` when the grid straddles it (so
    that ``A(0) = 0``).  ``start(E)`` gives the section point at energy ``E``.  Periods are
    measured by event detection along ``flow``.  The action integral uses
    adaptive quadrature of ``period_fn`` when a closed form is supplied, and
    otherwise integrates the Hermite interpolant of the measured periods.
    """
    energies = np.asarray(energies, dtype=float)
    if np.any(np.diff(energies) <= 0):
        raise ValueError("energy grid must be increasing")
    periods = np.array([first_return_time(flow, start(e), crossing, dt, t_max) for e in energies])
    if period_fn is not None:
        actions = np.zeros_like(energies)
        for n in range(1, len(energies)):
            actions[n] = actions[n - 1] + integrate.quad(period_fn, energies[n - 1], energies[n],
                                                          epsabs=1e-15, epsrel=1e-13)[0]
        if energies[0] < 0.0 < energies[-1]:
            actions -= integrate.quad(period_fn, energies[0], 0.0, epsabs=1e-15, epsrel=1e-13)[0]
    else:
        # dT/dE estimated from the sampled periods; exact for constant T
        slopes = np.gradient(periods, energies)
        spline = CubicHermiteSpline(energies, periods, slopes)
        anti = spline.antiderivative()
        origin = 0.0 if energies[0] < 0.0 < energies[-1] else energies[0]
        actions = anti(energies) - anti(origin)
    p0 = start(energies[0])
    return SectionData((float(p0[0]), float(p0[1])), energies, periods, np.asarray(actions))


def action_angle(sd: SectionData, p, flow: Callable, crossing: Callable, energy: Callable,
                 dt: float = 0.05) -> Tuple[float, float]:
    """Generic ``(Theta, A)`` of a point via the backward time to the section."""
    e = float(energy(p))
    T = sd.period(e)
    back = first_return_time(lambda q, t: flow(q, -t), p, lambda q: -crossing(q), dt=dt,
                             t_max=4 * T + 1, skip_first=False)
    # a point sitting on the section returns after a full period
    phase = back % T
    return phase / T, sd.action(e)


def action_angle_inverse(sd: SectionData, angle: float, action: float, flow: Callable,
                         start: Callable[[float], object]):
    e = sd.energy_of_action(action)
    return flow(start(e), (angle % 1.0) * sd.period(e))


# -- caps --------------------------------------------------------------------

@dataclass
class Family:
    index: int
    sectors: Tuple[int, ...]
    sign: int                  # sign of the energy on the family
    orientation: int           # Theta = orientation * clock / T
    center_energy: float
    total_action: float = 0.0
    grid: np.ndarray = field(default_factory=lambda: np.zeros(0))       # |E| nodes
    grid_action: np.ndarray = field(default_factory=lambda: np.zeros(0))
    grid_period: np.ndarray = field(default_factory=lambda: np.zeros(0))
    section: Optional[SectionData] = None
    _spline: Optional[CubicHermiteSpline] = None

    def spline(self) -> CubicHermiteSpline:
        if self._spline is None:
            # increasing abscissa |E|; A decreases with slope -T
            self._spline = CubicHermiteSpline(self.grid, self.grid_action, -self.grid_period)
        return self._spline


class CapModel:
    """A built integrable cap; see :func:`build_cap`."""

    def __init__(self, strip: Strip, families: List[Family], switch_fraction: float,
                 energy_grid_size: int, table_fraction: float):
        self.strip = strip
        self.families = families
        self.switch_energy = switch_fraction * strip.level
        self.switch_fraction = switch_fraction
        self.energy_grid_size = energy_grid_size
        self.table_fraction = table_fraction
        self.family_of_sector = np.zeros(strip.nsaddles, dtype=int)
        self.position_in_family = np.zeros(strip.nsaddles, dtype=int)
        for fam in families:
            for q, m in enumerate(fam.sectors):
                self.family_of_sector[m] = fam.index
                self.position_in_family[m] = q
        self.switch_action = np.array([float(self.action(f, self.switch_energy)) for f in range(len(families))])
        self.saddles = [(float(strip.saddle_theta(j)), 0.0) for j in range(strip.nsaddles)]

    @property
    def k(self) -> int:
        return self.strip.k

    @property
    def eta(self) -> float:
        return self.strip.eta

    @property
    def area(self) -> float:
        return float(sum(f.total_action for f in self.families))

    # -- closed-form clock --------------------------------------------------
    def sector_lengths(self, fam: int, energy):
        """``tau_m(E) - 1`` for each sector of a family, stacked on the first axis."""
        f = self.families[fam]
        s = self.strip.invariant_of_energy(energy)
        return np.stack([self.strip.transit(self.strip.in_saddle(m), s) - 1.0 for m in f.sectors])

    def period(self, fam: int, energy):
        return np.sum(self.sector_lengths(fam, energy), axis=0)

    def action(self, fam: int, abs_energy):
        f = self.families[fam]
        a = np.asarray(abs_energy, dtype=float)
        return f.spline()(np.clip(a, f.grid[0], f.grid[-1]))

    def abs_energy_of_action(self, fam: int, action):
        """Invert the action table (Newton with bisection safeguard, vectorized)."""
        f = self.families[fam]
        A = np.asarray(action, dtype=float)
        spline = f.spline()
        dspline = spline.derivative()
        lo = np.full(A.shape, f.grid[0])
        hi = np.full(A.shape, f.grid[-1])
        a = np.interp(A, f.grid_action[::-1], f.grid[::-1])
        for _ in range(50):
            val = spline(a) - A
            # decreasing function: val > 0 means a too small
            lo = np.where(val > 0, a, lo)
            hi = np.where(val <= 0, a, hi)
            der = dspline(a)
            step = val / der
            a_new = a - step
            bad = (a_new < lo) | (a_new > hi) | ~np.isfinite(a_new)
            a_new = np.where(bad, 0.5 * (lo + hi), a_new)
            done = np.all(np.abs(a_new - a) <= 4e-16 * np.abs(a) + 1e-24)
            a = a_new
            if done:
                break
        return a

    def clock(self, theta, r):
        """``(family, energy, clock)`` of strip points."""
        theta = ham.as_real(theta)
        r = ham.as_real(r)
        sector = self.strip.sector_of(theta)
        fam = self.family_of_sector[sector]
        pos = self.position_in_family[sector]
        energy = self.strip.energy(theta, r)
        t_in = self.strip.in_strip_time(theta, r)
        offset = np.zeros(theta.shape, dtype=np.result_type(theta, r))
        for f in range(len(self.families)):
            sel = fam == f
            if not np.any(sel):
                continue
            lengths = self.sector_lengths(f, energy[sel])
            cum = np.vstack([np.zeros((1,) + lengths.shape[1:]), np.cumsum(lengths, axis=0)])
            offset[sel] = np.take_along_axis(cum, pos[sel][None, :], axis=0)[0]
        return fam, energy, offset + t_in - 1.0

    def from_clock(self, fam: int, energy, clock):
        """Strip point of family ``fam`` at ``energy`` and ``clock`` (vectorized)."""
        f = self.families[fam]
        energy = ham.as_real(energy)
        lengths = self.sector_lengths(fam, energy)
        total = np.sum(lengths, axis=0)
        c = np.mod(ham.as_real(clock), total)
        cum = np.cumsum(lengths, axis=0)
        pos = np.sum(c[None, ...] >= cum, axis=0)
        pos = np.minimum(pos, len(f.sectors) - 1)
        start = np.where(pos > 0, np.take_along_axis(
            np.vstack([np.zeros((1,) + cum.shape[1:]), cum]), pos[None, ...], axis=0)[0], 0.0)
        sectors = np.asarray(f.sectors)[pos]
        s = self.strip.invariant_of_energy(energy)
        th_in = self.strip.sigma_theta(self.strip.in_saddle(sectors), s)
        th, r = ham.flow_arrays(self.strip.sys, th_in, np.full(np.shape(th_in), -self.eta),
                                1.0 + c - start)
        return np.mod(th, self.strip.period), r

    # -- charts -------------------------------------------------------------
    def strip_to_disk(self, theta, r):
        """Disk-chart coordinates of strip points: ``(family, x, y)``."""
        fam, energy, clock = self.clock(theta, r)
        x = np.zeros(np.shape(energy))
        y = np.zeros(np.shape(energy))
        for f in range(len(self.families)):
            sel = fam == f
            if not np.any(sel):
                continue
            F = self.families[f]
            T = self.period(f, energy[sel])
            angle = F.orientation * clock[sel] / T
            A = self.action(f, np.abs(energy[sel]))
            rho = np.sqrt(np.maximum(A, 0.0) / math.pi)
            x[sel] = rho * np.cos(2 * math.pi * angle)
            y[sel] = rho * np.sin(2 * math.pi * angle)
        return fam, x, y

    def disk_energy(self, fam: int, x, y):
        A = math.pi * (np.asarray(x) ** 2 + np.asarray(y) ** 2)
        return self.families[fam].sign * self.abs_energy_of_action(fam, A)

    def disk_to_strip(self, fam: int, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        F = self.families[fam]
        energy = self.disk_energy(fam, x, y)
        T = self.period(fam, energy)
        angle = np.arctan2(y, x) / (2 * math.pi)
        clock = np.mod(F.orientation * angle, 1.0) * T
        return self.from_clock(fam, energy, clock)

    def disk_step(self, fam: int, x, y, t: float = 1.0):
        """Rigid rotation by ``2 pi t / T(E)`` on the circle of the point's action."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        F = self.families[fam]
        energy = self.disk_energy(fam, x, y)
        ang = 2 * math.pi * F.orientation * t / self.period(fam, energy)
        c, s = np.cos(ang), np.sin(ang)
        return c * x - s * y, s * x + c * y

    def hamiltonian_disk(self, fam: int, x, y):
        return self.disk_energy(fam, x, y)

    def to_dict(self) -> dict:
        st = self.strip
        return {
            "k": st.k,
            "eta": st.eta,
            "system": {"kind": st.sys.kind, "period": st.sys.period,
                       "wavenumber": st.sys.wavenumber,
                       "profile": json.loads(st.sys.profile.to_json())},
            "switch_fraction": self.switch_fraction,
            "energy_grid_size": self.energy_grid_size,
            "table_fraction": self.table_fraction,
            "area": self.area,
            "saddles": [{"theta": th, "r": 0.0} for th, _ in self.saddles],
            "sigma_out": [list(seg) for seg in st.sigma_out],
            "sigma_in": [list(seg) for seg in st.sigma_in],
            "boundary_pieces": st.boundary_pieces,
            "elliptic_points": [
                {"family": f.index, "sectors": list(f.sectors), "sign": f.sign,
                 "center_energy": f.center_energy, "orientation": f.orientation,
                 "period_at_center": float(self.period(f.index, f.center_energy)),
                 "rotation_number": float(1.0 / self.period(f.index, f.center_energy)),
                 "total_action": f.total_action,
                 "abs_energy_grid": f.grid.tolist(),
                 "action_table": f.grid_action.tolist(),
                 "period_table": f.grid_period.tolist()}
                for f in self.families],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "CapModel":
        """Rebuild from serialized parameters and check the stored tables."""
        data = json.loads(text)
        sysd = data["system"]
        profile = ham.Profile(tuple(sysd["profile"]["coefficients"]),
                              sysd["profile"]["validity_radius"])
        sys = ham.HamiltonianSystem(sysd["kind"], profile, sysd["period"], sysd["wavenumber"])
        cap = build_cap(sys, data["eta"], data["k"], switch_fraction=data["switch_fraction"],
                        grid_size=data["energy_grid_size"], table_fraction=data["table_fraction"],
                        verify_sections=False)
        for f, stored in zip(cap.families, data["elliptic_points"]):
            if not np.allclose(f.grid_action, stored["action_table"], rtol=1e-12, atol=0):
                raise ConstructionError("stored action table does not match rebuilt cap")
        return cap


def _family_layout(k: int) -> List[Tuple[Tuple[int, ...], int]]:
    layout = [((2 * i,), -1) for i in range(k)]
    layout.append((tuple(range(1, 2 * k, 2)), +1))
    return layout


def build_cap(sys: ham.HamiltonianSystem, eta: float = 0.05, k: int = 1, switch_fraction: float = 0.5,
              grid_size: int = 64, table_fraction: float = 0.25, verify_sections: bool = True,
              section_tol: float = 1e-9) -> CapModel:
    """Glue the strip, tabulate action-angle data, and blow down the inner circles.

    ``switch_fraction`` sets the energy ``|E| = switch_fraction * eta^3`` above
    which points are carried by the elliptic disk charts; the action tables
    cover ``|E| in [table_fraction * eta^3, eta^3]`` on ``grid_size`` nodes.
    With ``verify_sections`` each family's periods are re-measured by event
    detection along the glued flow and compared with the closed form.
    """
    strip = build_strip(sys, eta, k)
    level = strip.level
    families = []
    for idx, (sectors, sign) in enumerate(_family_layout(k)):
        # dTheta ^ dA must equal -(dr ^ dtheta) so that the blow-down has the
        # orientation of the strip (see module docstring)
        orientation = -1 if sign < 0 else 1
        families.append(Family(idx, sectors, sign, orientation, sign * level))
    cap = CapModel.__new__(CapModel)
    cap.strip = strip
    cap.families = families
    cap.family_of_sector = np.zeros(strip.nsaddles, dtype=int)
    cap.position_in_family = np.zeros(strip.nsaddles, dtype=int)
    for fam in families:
        for q, m in enumerate(fam.sectors):
            cap.family_of_sector[m] = fam.index
            cap.position_in_family[m] = q

    for fam in families:
        def period_abs(a, _f=fam.index, _s=fam.sign):
            return float(CapModel.period(cap, _f, _s * a))
        grid = np.linspace(table_fraction * level, level, grid_size)
        actions = np.empty(grid_size)
        actions[-1] = 0.0
        for n in range(grid_size - 2, -1, -1):
            actions[n] = actions[n + 1] + integrate.quad(period_abs, grid[n], grid[n + 1],
                                                         epsabs=1e-16, epsrel=1e-13)[0]
        inner, _ = integrate.quad(period_abs, 0.0, grid[0], epsabs=1e-16, epsrel=1e-10, limit=200)
        fam.total_action = float(actions[0] + inner)
        fam.grid = grid
        fam.grid_action = actions
        fam.grid_period = np.array([period_abs(a) for a in grid])
        if np.any(np.diff(actions) >= 0):
            raise ConstructionError("action table is not monotone", {"family": fam.index})

    model = CapModel(strip, families, switch_fraction, grid_size, table_fraction)

    if verify_sections:
        for fam in families:
            sd = family_section_data(model, fam.index, fam.grid[::8])
            fam.section = sd
            closed = np.array([float(model.period(fam.index, fam.sign * a)) for a in fam.grid[::8]])
            measured = sd.periods[np.argsort(np.abs(sd.energies))] if fam.sign < 0 else sd.periods
            err = float(np.max(np.abs(np.sort(measured) - np.sort(closed))))
            if err > section_tol:
                raise ConstructionError(
                    f"event-detected periods disagree with closed form by {err:.2e}",
                    {"family": fam.index, "measured": measured.tolist(), "closed": closed.tolist()})

    from .analysis import critical_census  # local import: analysis depends on surgery
    census = critical_census(model)
    extrema = [c for c in census if c["class"] in ("max", "min")]
    if len(extrema) != k + 1:
        raise ConstructionError(f"census found {len(extrema)} interior extrema, expected {k + 1}",
                                {"census": census})
    model.census = census
    return model


def family_section(cap: CapModel, fam: int):
    """Section ray through the middle of a family's first sector.

    Returns ``(start, crossing)`` callables for :func:`section_data`.
    """
    strip = cap.strip
    F = cap.families[fam]
    m0 = F.sectors[0]
    th_mid = float(strip.saddle_theta(m0 + 0.5))
    direction = -1.0 if m0 % 2 == 0 else 1.0   # theta decreases in even sectors
    period = strip.period

    def crossing(p):
        d = (float(p[0]) - th_mid + 0.5 * period) % period - 0.5 * period
        return direction * d

    def start(energy):
        s = float(strip.invariant_of_energy(energy))
        w = strip.sys.wavenumber
        r = math.pi * s / math.sin(2 * math.pi * w * th_mid)
        return (th_mid, r)

    return start, crossing


def family_section_data(cap: CapModel, fam: int, abs_energies) -> SectionData:
    F = cap.families[fam]
    energies = np.sort(F.sign * np.asarray(abs_energies, dtype=float))
    start, crossing = family_section(cap, fam)

    def flow(p, t):
        return cap_flow(cap.strip, p, t)

    def period_fn(e):
        return float(cap.period(fam, e))

    return section_data(flow, start, crossing, energies, period_fn=period_fn)


# -- cap dynamics on mixed chart arrays -----------------------------------------

def cap_normalize(cap: CapModel, fam, x, y):
    """Canonical chart for cap points; ``fam == STRIP`` marks strip coordinates."""
    fam = np.array(fam, dtype=int, copy=True)
    x = np.array(x, dtype=float, copy=True)
    y = np.array(y, dtype=float, copy=True)
    st = fam == STRIP
    if np.any(st):
        th, r = normalize_arrays(cap.strip, x[st], y[st])
        x[st], y[st] = th, r
        e = np.abs(cap.strip.energy(th, r))
        to_disk = np.zeros(fam.shape, dtype=bool)
        to_disk[st] = (e > cap.switch_energy) & (r < 0)
        if np.any(to_disk):
            f2, xd, yd = cap.strip_to_disk(x[to_disk], y[to_disk])
            fam[to_disk], x[to_disk], y[to_disk] = f2, xd, yd
    for f in range(len(cap.families)):
        sel = fam == f
        if not np.any(sel):
            continue
        A = math.pi * (x[sel] ** 2 + y[sel] ** 2)
        back = A > cap.switch_action[f]
        if np.any(back):
            idx = np.flatnonzero(sel)[back]
            th, r = cap.disk_to_strip(f, x[idx], y[idx])
            fam[idx], x[idx], y[idx] = STRIP, th, r
    return fam, x, y


def cap_step(cap: CapModel, fam, x, y, t: float = 1.0, normalize: bool = True):
    """Time-``t`` map (``|t| <= 1``) of the cap on mixed strip/disk arrays."""
    fam = np.asarray(fam, dtype=int)
    x = np.array(x, dtype=float, copy=True)
    y = np.array(y, dtype=float, copy=True)
    st = fam == STRIP
    if np.any(st):
        th, r = strip_step(cap.strip, x[st], y[st], t, normalize=normalize)
        x[st], y[st] = th, r
    for f in range(len(cap.families)):
        sel = fam == f
        if np.any(sel):
            x[sel], y[sel] = cap.disk_step(f, x[sel], y[sel], t)
    if normalize:
        return cap_normalize(cap, fam, x, y)
    return fam.copy(), x, y


def cap_time_one(cap: CapModel, p, t: float = 1.0):
    """Scalar time-one map; ``p = (family, x, y)`` with family ``-1`` for the strip."""
    fam, x, y = cap_step(cap, np.array([int(p[0])]), np.array([float(p[1])]), np.array([float(p[2])]), t)
    return int(fam[0]), float(x[0]), float(y[0])


def cap_energy(cap: CapModel, fam, x, y):
    fam = np.asarray(fam, dtype=int)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    e = np.empty(fam.shape)
    st = fam == STRIP
    if np.any(st):
        e[st] = cap.strip.energy(x[st], y[st])
    for f in range(len(cap.families)):
        sel = fam == f
        if np.any(sel):
            e[sel] = cap.disk_energy(f, x[sel], y[sel])
    return e


def center(cap: CapModel, fam: int) -> Tuple[int, float, float]:
    """The blown-down elliptic point of a family in its disk chart."""
    return fam, 0.0, 0.0
