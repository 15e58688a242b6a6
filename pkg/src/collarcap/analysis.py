"""Diagnostics: Lyapunov exponents, entropy, rotation numbers, drift, census."""
from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from . import anosov, kernels, surgery
from . import atlas as at
from .errors import ClassificationError

log = logging.getLogger(__name__)

RENORM_EVERY = 50
LINK_BAND = 1e-9
STOCHASTIC, CAP, BOUNDARY_LINK = "stochastic", "cap", "boundary_link"


def _fd_gradient(f, x, y, h):
    return np.array([(f(x + h, y) - f(x - h, y)) / (2 * h), (f(x, y + h) - f(x, y - h)) / (2 * h)])


def _fd_hessian(f, x, y, h):
    hx = (_fd_gradient(f, x + h, y, h) - _fd_gradient(f, x - h, y, h)) / (2 * h)
    hy = (_fd_gradient(f, x, y + h, h) - _fd_gradient(f, x, y - h, h)) / (2 * h)
    m = np.column_stack([hx, hy])
    return 0.5 * (m + m.T)


def _newton(f, x, y, h, tol, inside, max_iter=40):
    for _ in range(max_iter):
        g = _fd_gradient(f, x, y, h)
        hess = _fd_hessian(f, x, y, max(h, 1e-4))
        try:
            step = np.linalg.solve(hess, g)
        except np.linalg.LinAlgError:
            return None
        x, y = x - step[0], y - step[1]
        if not inside(x, y):
            return None
        if math.hypot(step[0], step[1]) < tol:
            return x, y
    return None


def _classify_hessian(hess):
    eig = np.linalg.eigvalsh(hess)
    if eig[0] > 0:
        return "min", eig
    if eig[1] < 0:
        return "max", eig
    if eig[0] < 0 < eig[1]:
        return "saddle", eig
    raise ClassificationError(f"degenerate critical point, Hessian eigenvalues {eig}")


def critical_census(cap, fd_step: float = 1e-5, tol: float = 1e-12, seeds: int = 9) -> List[dict]:
    """Critical points of the extended cap Hamiltonian found by Newton's method.

    Seeds cover each elliptic disk chart and the strip.  Zeros on ``r = 0``
    are reported with ``boundary=True``; they are the collar saddles and are
    not interior critical points of the cap.
    """
    found: List[dict] = []
    strip = cap.strip
    period = strip.period

    def add(entry, key):
        for other in found:
            if other["chart"] == entry["chart"]:
                d = np.subtract(other["point"], key)
                if entry["chart"] == surgery.STRIP:
                    d[0] = (d[0] + period / 2) % period - period / 2
                if np.hypot(*d) < 1e-6:
                    return
        found.append(entry)

    for fam in range(len(cap.families)):
        rad = math.sqrt(cap.switch_action[fam] / math.pi)

        def H(x, y, _f=fam):
            return float(cap.disk_energy(_f, np.array([x]), np.array([y]))[0])

        grid = np.linspace(-0.7 * rad, 0.7 * rad, seeds)
        for x0 in grid:
            for y0 in grid:
                if x0 * x0 + y0 * y0 > (0.7 * rad) ** 2:
                    continue
                res = _newton(H, x0, y0, fd_step * rad, tol * max(rad, 1e-300) + 1e-15,
                              lambda x, y: x * x + y * y < rad * rad)
                if res is None:
                    log.debug("census: Newton did not converge from disk seed (%g, %g)", x0, y0)
                    continue
                hess = _fd_hessian(H, res[0], res[1], 1e-2 * rad)
                kind, eig = _classify_hessian(hess)
                add({"chart": fam, "point": [float(res[0]), float(res[1])], "class": kind,
                     "energy": H(*res), "hessian_eigenvalues": eig.tolist(), "boundary": False},
                    res)

    def Hs(x, y):
        return float(strip.energy(x, y))

    eta = strip.eta
    for th0 in np.linspace(0.0, period, 8 * strip.nsaddles, endpoint=False):
        for r0 in np.linspace(-0.9 * eta, -0.02 * eta, seeds):
            res = _newton(Hs, th0, r0, fd_step, tol, lambda x, y: -eta <= y <= 0.1 * eta)
            if res is None:
                log.debug("census: Newton did not converge from strip seed (%g, %g)", th0, r0)
                continue
            th = res[0] % period
            hess = _fd_hessian(Hs, th, res[1], 1e-4)
            kind, eig = _classify_hessian(hess)
            boundary = abs(res[1]) < 1e-9
            if not boundary and abs(Hs(th, res[1])) > strip.level:
                continue
            add({"chart": surgery.STRIP, "point": [float(th), float(res[1])], "class": kind,
                 "energy": Hs(th, res[1]), "hessian_eigenvalues": eig.tolist(),
                 "boundary": boundary}, (th, res[1]))
    return found


# -- region labels -------------------------------------------------------------

def classify_batch(s: at.Surface, b: at.Batch, link_band: float = LINK_BAND) -> np.ndarray:
    """Region labels of normalized points (object array of label strings)."""
    out = np.full(len(b), STOCHASTIC, dtype=object)
    hole = b.kind == at.HOLE
    role = np.where(hole, s.role[b.sheet, np.maximum(b.hole, 0)], -1)
    out[hole & (np.abs(b.y) < link_band)] = BOUNDARY_LINK
    out[(b.kind == at.DISK) | (hole & (role == 0) & (b.y < 0) & (np.abs(b.y) >= link_band))] = CAP
    return out


def classify(s: at.Surface, p: at.ChartPoint, link_band: float = LINK_BAND) -> str:
    return str(classify_batch(s, at.Batch.of([p]), link_band)[0])


def cap_strip_energy(s: at.Surface, b: at.Batch) -> np.ndarray:
    """Cap Hamiltonian of cap points (strip or disk charts)."""
    e = np.empty(len(b))
    dsk = b.kind == at.DISK
    st = ~dsk
    e[st] = s.cap.strip.energy(b.x[st], b.y[st])
    for f in np.unique(b.fam[dsk]):
        sel = dsk & (b.fam == f)
        e[sel] = s.cap.disk_energy(int(f), b.x[sel], b.y[sel])
    return e


def near_separatrix(s: at.Surface, b: at.Batch, band: float = 0.1) -> np.ndarray:
    """Cap points with ``|E| < band * eta^3`` (the exclusion band of cap statistics)."""
    return np.abs(cap_strip_energy(s, b)) < band * s.cap.eta ** 3


# -- Lyapunov exponents --------------------------------------------------------

@dataclass(frozen=True)
class FtleRecord:
    seed: at.ChartPoint
    n: int
    ftle: float
    renorm_count: int


def worker_count(threads: Optional[int] = None) -> int:
    if threads is None:
        threads = int(os.environ.get("COLLAR_THREADS", os.cpu_count() or 1))
    return max(1, threads)


def _chunks(m: int, parts: int):
    edges = np.linspace(0, m, parts + 1).astype(int)
    return [(a, b) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def _kernel_ftle(s: at.Surface, b: at.Batch, n: int, threads: Optional[int]):
    d = s.direction[b.sheet].astype(float)
    args = (s.epsilon, anosov.LAMBDA, s.frame, RENORM_EVERY)
    work = _chunks(len(b), worker_count(threads))

    def run(chunk):
        lo, hi = chunk
        res = kernels.ftle(b.kind[lo:hi], b.hole[lo:hi], b.x[lo:hi], b.y[lo:hi], d[lo:hi], n,
                           args[0], args[1], args[2], args[3])
        return res[0], res[1]

    if len(work) <= 1:
        parts = [run(c) for c in work]
    else:
        # the compiled kernel releases the GIL; results keep the chunk order
        with ThreadPoolExecutor(max_workers=len(work)) as pool:
            parts = list(pool.map(run, work))
    vals = np.concatenate([p[0] for p in parts]) if parts else np.zeros(0)
    count = parts[0][1] if parts else 0
    return vals, count


def _cap_ftle(s: at.Surface, b: at.Batch, n: int, h: float):
    """Exponent of ``D f^n`` for cap points.

    On a cap ``f^n`` is a shift of the flow clock by ``n``; its differential
    is taken by central differences with the stencil shrunk by ``1/n`` (the
    shear of ``f^n`` grows linearly in ``n``).  The norm grows at most
    linearly, so no renormalization is needed.
    """
    img = at.cap_power(s, b, n)

    def step(bb):
        return at.cap_power_raw(s, bb, n)

    hs = (at.fd_steps(s, b, img, h) / n).astype(np.longdouble)
    wide = b.copy()
    wide.x = b.x.astype(np.longdouble)
    wide.y = b.y.astype(np.longdouble)
    J = (4.0 * at._fd_pass(s, wide, img, 0.5 * hs, False, step) - at._fd_pass(s, wide, img, hs, False, step)) / 3.0
    return np.log(np.linalg.norm(J, 2, axis=(1, 2))) / n


def ftle_batch(s: at.Surface, b: at.Batch, n: int, threads: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Finite-time Lyapunov exponents ``(1/n) log |D f^n|`` of normalized points.

    Returns ``(ftle, renorm_count)``.  Orbits off the caps never reach a cap
    or a seam, so they run in the compiled kernel with vector transport and
    renormalization every ``RENORM_EVERY`` steps.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    labels = classify_batch(s, b)
    out = np.empty(len(b))
    counts = np.zeros(len(b), dtype=int)
    cap = labels == CAP
    free = ~cap
    if np.any(free):
        idx = np.flatnonzero(free)
        out[idx], counts[idx] = _kernel_ftle(s, b.take(idx), n, threads)
    if np.any(cap):
        idx = np.flatnonzero(cap)
        out[idx] = _cap_ftle(s, b.take(idx), n, s.tolerances.fd_step)
    return out, counts


def ftle(s: at.Surface, p: at.ChartPoint, n: int) -> FtleRecord:
    p = at.normalize(s, p)
    vals, counts = ftle_batch(s, at.Batch.of([p]), n, threads=1)
    return FtleRecord(p, int(n), float(vals[0]), int(counts[0]))


def entropy_estimate(s: at.Surface, m: int, n: int, rng: np.random.Generator,
                     boot: int = 1000, threads: Optional[int] = None) -> Tuple[float, float]:
    """Mean of ``max(ftle, 0)`` over ``m`` area-uniform samples and its bootstrap standard error."""
    if m < 1 or n < 1:
        raise ValueError("m and n must be >= 1")
    b = at.sample(s, m, rng)
    vals = np.maximum(ftle_batch(s, b, n, threads)[0], 0.0)
    means = vals[rng.integers(0, m, size=(boot, m))].mean(axis=1)
    return float(vals.mean()), float(means.std(ddof=1))


# -- cap statistics -----------------------------------------------------------

def _disk_angle(s: at.Surface, b: at.Batch, fam: int) -> np.ndarray:
    """Polar angle (in turns) in the disk chart of ``fam``; strip points are carried over."""
    x, y = b.x.copy(), b.y.copy()
    st = b.kind != at.DISK
    if np.any(st):
        f2, xd, yd = s.cap.strip_to_disk(b.x[st], b.y[st])
        if np.any(f2 != fam):
            raise ClassificationError("orbit visits more than one cap family")
        x[st], y[st] = xd, yd
    return np.arctan2(y, x) / (2.0 * math.pi)


def rotation_number(s: at.Surface, p: at.ChartPoint, n: int) -> float:
    """Mean angular increment per iterate around the enclosing elliptic center, in ``[0, 1)``.

    Angles are measured in the family's disk chart and unwrapped step by step;
    the sign follows the flow direction of the family.  Orbits too close to
    the separatrix, where the disk chart is not defined, raise
    :class:`ClassificationError`.
    """
    p = at.normalize(s, p)
    b = at.Batch.of([p])
    if classify_batch(s, b)[0] != CAP:
        raise ClassificationError(f"{p} is not a cap point")
    e = abs(float(cap_strip_energy(s, b)[0]))
    fam_tab = s.cap.families[0]
    if e < fam_tab.grid[0]:
        raise ClassificationError(f"|E| = {e:.3g} is too close to the separatrix for a single center")
    if p.kind == at.DISK:
        fam = p.fam
    else:
        fam = int(s.cap.strip_to_disk(np.array([p.x]), np.array([p.y]))[0][0])
    orbit = [b]
    cur = b
    for _ in range(n):
        cur = at.map_batch(s, cur)
        orbit.append(cur)
    pts = at.Batch(*(np.concatenate([getattr(o, f) for o in orbit])
                     for f in ("sheet", "kind", "hole", "fam", "x", "y")))
    ang = _disk_angle(s, pts, fam)
    inc = np.diff(ang)
    inc -= np.round(inc)
    orient = s.cap.families[fam].orientation * int(s.direction[p.sheet])
    return float(np.mod(orient * inc.sum() / n, 1.0))


def level_drift_batch(s: at.Surface, b: at.Batch, n: int) -> Tuple[np.ndarray, at.Batch]:
    """Max over ``n`` iterates of ``|H - H_0|`` in cap coordinates; also the final points."""
    b = at.normalize_batch(s, b)
    if np.any(classify_batch(s, b) != CAP):
        raise ClassificationError("level drift is defined for cap points only")
    e0 = cap_strip_energy(s, b)
    drift = np.zeros(len(b))
    cur = b
    for _ in range(n):
        cur = at.map_batch(s, cur)
        np.maximum(drift, np.abs(cap_strip_energy(s, cur) - e0), out=drift)
    return drift, cur


def level_drift(s: at.Surface, p: at.ChartPoint, n: int) -> float:
    return float(level_drift_batch(s, at.Batch.of([p]), n)[0][0])
