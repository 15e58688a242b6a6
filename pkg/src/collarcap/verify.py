"""Invariant suite shared by the ``verify`` command and the acceptance tests.

Every check returns a :class:`Check` with the measured value and its
threshold; nothing here raises on a failed check.
"""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np
from scipy.interpolate import CubicSpline

from . import analysis as an
from . import anosov, blowup, figures, geometry
from . import atlas as at
from . import hamiltonian as ham
from . import surgery


@dataclass
class Check:
    name: str
    value: float
    threshold: float
    passed: bool
    detail: dict = field(default_factory=dict)
    seconds: float = 0.0

    def as_dict(self) -> dict:
        d = asdict(self)
        d["value"] = float(self.value)
        return d

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"{mark}  {self.name}: {self.value:.3e} (threshold {self.threshold:.1e}, {self.seconds:.1f}s)"


def _timed(fn: Callable[[], Check]) -> Check:
    t = time.perf_counter()
    c = fn()
    c.seconds = time.perf_counter() - t
    return c


def _below(name, value, threshold, **detail) -> Check:
    value = float(value)
    return Check(name, value, threshold, bool(value < threshold), detail)


def _det_defect(J: np.ndarray) -> np.ndarray:
    return np.abs(np.abs(J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]) - 1.0)


SIZES = {
    "full": dict(points=10_000, orbit=1000, bulk=10_000, ftle_seeds=500, ftle_n=5000,
                 cap_seeds=200, cap_n=10_000, drift_seeds=200, drift_n=10_000, glue=200,
                 rep_steps=1000, mc=1_000_000, mask=512, entropy_m=500),
    "quick": dict(points=1000, orbit=200, bulk=1000, ftle_seeds=100, ftle_n=2000,
                  cap_seeds=40, cap_n=2000, drift_seeds=40, drift_n=1000, glue=50,
                  rep_steps=200, mc=100_000, mask=256, entropy_m=200),
}


# -- module invariants -------------------------------------------------------------

def check_anosov() -> Check:
    A = np.array(anosov.MATRIX, dtype=float)
    ed = anosov.eigen_data()
    R = np.asarray(ed.rotation)
    lam = anosov.LAMBDA
    recon = R @ np.diag([math.exp(lam), math.exp(-lam)]) @ R.T
    err = max(abs(np.linalg.det(A) - 1.0), float(np.max(np.abs(recon - A))) / 20.0)
    return _below("anosov: det A = 1 and A = R diag(e^l, e^-l) R^T", err, 1e-12)


def check_blowup(rng: np.random.Generator, n: int = 1000) -> Check:
    chart = blowup.BlowupChart((0.5, 0.5), anosov.eigen_data().rotation, 0.01, 1)
    worst_rt, worst_det = 0.0, 0.0
    for th, r in zip(rng.random(n), 0.01 * (0.01 + 0.99 * rng.random(n))):
        v = blowup.project(chart, (th, r))
        q = blowup.lift(chart, v)
        worst_rt = max(worst_rt, abs((q.theta - th + 0.5) % 1 - 0.5), abs(q.r - r))
        worst_det = max(worst_det, abs(abs(np.linalg.det(blowup.project_jacobian(chart, th, r))) - 1))
    return _below("blowup: lift/project round trip and |det D project| = 1", max(worst_rt, worst_det), 1e-10,
                  roundtrip=worst_rt, det=worst_det)


def check_hamiltonian(rng: np.random.Generator, n: int = 500) -> Check:
    sys = ham.HamiltonianSystem("collar", ham.Profile(), 1)
    th = rng.random(n)
    r = 0.05 * (2 * rng.random(n) - 1)
    e0 = sys.energy_of_invariant(sys.invariant(th, r))
    th1, r1 = ham.flow_arrays(sys, th, r, 1.0)
    drift = float(np.max(np.abs(sys.energy_of_invariant(sys.invariant(th1, r1)) - e0)))
    dets = [abs(abs(np.linalg.det(ham.flow_jacobian(sys, a, b, 1.0))) - 1) for a, b in zip(th[:100], r[:100])]
    return _below("hamiltonian: closed-form flow conserves H and has |det| = 1", max(drift, max(dets)), 1e-10,
                  drift=drift, det=max(dets))


# -- acceptance criteria -----------------------------------------------------------

def _chart_batches(s: at.Surface, n: int, rng: np.random.Generator) -> Dict[str, at.Batch]:
    out = {"bulk": at.Batch.bulk(rng.random(n), rng.random(n))}
    th = rng.random(n)
    r = s.epsilon * rng.random(n)
    out["collar"] = at.Batch(np.zeros(n, int), np.full(n, at.HOLE), np.ones(n, int), np.full(n, -1), th, r)
    if s.cap is not None:
        cap = at.sample(s, 2 * n, rng, "cap")
        cap = cap.take(np.flatnonzero(~an.near_separatrix(s, cap)))
        strip = cap.take(np.flatnonzero(cap.kind == at.HOLE)[:n])
        disk = cap.take(np.flatnonzero(cap.kind == at.DISK)[:n])
        more = n - len(disk)
        if more > 0:
            # the disk charts hold fewer samples than the strip; top up uniformly by action
            fam = rng.integers(0, len(s.cap.families), more)
            A = np.asarray(s.cap.switch_action)[fam] * rng.random(more)
            rad = np.sqrt(A / math.pi)
            ang = 2 * math.pi * rng.random(more)
            extra = at.Batch(np.zeros(more, int), np.full(more, at.DISK), np.zeros(more, int), fam,
                             rad * np.cos(ang), rad * np.sin(ang))
            disk = at.Batch(*(np.concatenate([getattr(disk, f), getattr(extra, f)])
                              for f in ("sheet", "kind", "hole", "fam", "x", "y")))
        out["cap strip"] = strip
        out["cap disk"] = disk
    return {k: at.normalize_batch(s, v) for k, v in out.items()}


def check_symplectic_charts(s: at.Surface, n: int, rng: np.random.Generator) -> Check:
    worst: Dict[str, float] = {}
    counts: Dict[str, int] = {}
    for name, b in _chart_batches(s, n, rng).items():
        for inverse in (False, True):
            _, J = at.fd_jacobian_batch(s, b, s.tolerances.fd_step, inverse)
            key = f"{name}{' inverse' if inverse else ''}"
            worst[key] = float(_det_defect(J).max())
            counts[key] = len(b)
    return _below("AC1 |det Df| - 1 per chart (finite differences)", max(worst.values()), 1e-7,
                  per_chart=worst, points=counts,
                  excluded="cap points with |E| < 0.1 eta^3 (separatrix band)")


def check_symplectic_orbits(s: at.Surface, steps: int, rng: np.random.Generator) -> Check:
    """FD determinant along mixed bulk/collar and cap orbits; analytic tangents on closed-form steps."""
    fd_worst, cf_worst = 0.0, 0.0
    visits = {"bulk": 0, "collar": 0, "cap": 0}
    # a bulk seed next to a fixed point, so the orbit passes through collars
    p = at.normalize(s, at.ChartPoint.bulk(0.5 + 0.02, 0.5 + 0.013))
    seeds = [p]
    if s.cap is not None:
        cap = at.sample(s, 50, rng, "cap")
        cap = cap.take(np.flatnonzero(~an.near_separatrix(s, cap, band=0.2)))
        seeds.append(cap.point(0))
    for seed in seeds:
        b = at.Batch.of([seed])
        for _ in range(steps):
            img, J = at.fd_jacobian_batch(s, b, s.tolerances.fd_step)
            fd_worst = max(fd_worst, float(_det_defect(J)[0]))
            q = b.point(0)
            if q.kind == at.BULK or (q.kind == at.HOLE and q.y >= 0):
                visits["bulk" if q.kind == at.BULK else "collar"] += 1
                ts = at.global_tangent(s, q)
                cf_worst = max(cf_worst, abs(abs(np.linalg.det(ts.jacobian)) - 1.0))
            else:
                visits["cap"] += 1
            b = img
    c = _below("AC1 |det Df| - 1 along orbits (FD) and closed-form segments", max(fd_worst, cf_worst / 1e-3),
               1e-7, fd=fd_worst, closed_form=cf_worst, closed_form_threshold=1e-10, visits=visits)
    c.passed = fd_worst < 1e-7 and cf_worst < 1e-10
    c.value = fd_worst
    return c


def check_conjugacy(s: at.Surface, n: int, rng: np.random.Generator) -> Check:
    x, y, _ = anosov.quotient_rep_array(rng.random(n), rng.random(n))
    z = at.normalize_batch(s, at.Batch.bulk(x, y))
    left = at.map_batch(s, z)
    A = np.array(anosov.MATRIX, dtype=float)
    ax, ay = A[0, 0] * x + A[0, 1] * y, A[1, 0] * x + A[1, 1] * y
    right = at.normalize_batch(s, at.Batch.bulk(ax - np.floor(ax), ay - np.floor(ay)))
    lx, ly = at.express(s, left, right, near=True)
    d = np.hypot(lx - right.x, ly - right.y)
    return _below("AC2 conjugacy |f(pi*(z)) - pi*(A z)|", d.max(), 1e-10,
                  collar_images=int(np.sum(right.kind == at.HOLE)))


def ftle_oracle() -> float:
    """``log`` of the spectral radius of the integer matrix, computed independently."""
    return float(np.log(np.max(np.abs(np.linalg.eigvals(np.array(anosov.MATRIX, dtype=float))))))


def check_ftle_median(s: at.Surface, seeds: int, n: int, rng: np.random.Generator) -> Check:
    b = at.sample(s, seeds, rng, "stochastic")
    vals, counts = an.ftle_batch(s, b, n)
    med = float(np.median(vals))
    ref = ftle_oracle()
    return _below("AC3 median FTLE relative error", abs(med / ref - 1.0), 0.02, median=med, oracle=ref,
                  renormalizations=int(counts[0]), backend=an.kernels.BACKEND)


def check_entropy(s: at.Surface, m: int, n: int, rng: np.random.Generator) -> Check:
    est, se = an.entropy_estimate(s, m, n, rng)
    z = est / se if se > 0 else math.inf
    return Check("AC3 entropy estimate in standard errors (> 5)", z, 5.0, bool(est > 0 and z >= 5.0),
                 {"estimate": est, "standard_error": se})


def census_cap(k: int) -> surgery.CapModel:
    """Caps of the census check: the surface cap for k = 1, unit-rate period-2 caps otherwise."""
    if k == 1:
        return at.collar_cap(0.05)
    return surgery.build_cap(ham.HamiltonianSystem("collar", ham.Profile((1.0,)), 2, k / 2.0), 0.05, k)


def check_census(ks=(1, 2, 3)) -> Check:
    detail = {}
    ok = True
    worst_unit = 0.0
    for k in ks:
        cap = census_cap(k)
        interior = [c for c in cap.census if not c["boundary"]]
        definite = all(c["class"] in ("min", "max") for c in interior)
        ok &= len(interior) == k + 1 and definite
        for fam in range(len(cap.families)):
            def tmap(q, _f=fam, _c=cap):
                f2, x, y = surgery.cap_time_one(_c, (_f, q[0], q[1]))
                return (x, y)
            J = geometry.jacobian_fd(tmap, (0.0, 0.0), 1e-7)
            eig = np.linalg.eigvals(J)
            worst_unit = max(worst_unit, float(np.max(np.abs(np.abs(eig) - 1.0))))
        detail[f"k={k}"] = {"interior": len(interior), "classes": [c["class"] for c in interior]}
    c = Check("AC4 census k+1 definite extrema; center eigenvalues on the unit circle", worst_unit, 1e-6,
              bool(ok and worst_unit < 1e-6), detail)
    return c


def _cap_seeds(s: at.Surface, m: int, rng: np.random.Generator) -> at.Batch:
    b = at.sample(s, 3 * m, rng, "cap")
    return b.take(np.flatnonzero(~an.near_separatrix(s, b))[:m])


def check_cap_ftle(s: at.Surface, m: int, n: int, rng: np.random.Generator) -> Check:
    b = _cap_seeds(s, m, rng)
    vals, _ = an.ftle_batch(s, b, n)
    return _below("AC4 cap-seeded FTLE max", vals.max(), 0.05, seeds=len(b), n=n)


def check_level_drift(s: at.Surface, m: int, n: int, rng: np.random.Generator) -> Check:
    b = _cap_seeds(s, m, rng)
    drift, end = an.level_drift_batch(s, b, n)
    stay = bool(np.all(an.classify_batch(s, end) == an.CAP))
    c = _below("AC5 cap level drift max", drift.max(), 1e-7, seeds=len(b), n=n, invariant=stay)
    c.passed = c.passed and stay
    return c


def shear_fixture(c: float):
    """``H = c r`` on the cylinder: ``theta`` advances at speed ``c``; returns (flow, start, crossing)."""
    def flow(p, t):
        return ((p[0] + c * t) % 1.0, p[1])

    def start(e):
        return (0.0, e / c)

    def crossing(p):
        return (p[0] + 0.5) % 1.0 - 0.5

    return flow, start, crossing


def check_shear_fixture(c: float = 2.5) -> Check:
    flow, start, crossing = shear_fixture(c)
    energies = np.linspace(-1.0, 1.0, 9)
    sd = surgery.section_data(flow, start, crossing, energies)
    err_T = float(np.max(np.abs(sd.periods - 1.0 / c)))
    err_A = float(np.max(np.abs(sd.actions - energies / c)))
    return _below("AC6 H = c r fixture: T = 1/c and A = E/c", max(err_T, err_A), 1e-9, period=err_T, action=err_A)


def frame_det(transform, flow, energy, p, scale: float) -> float:
    """``|det D transform|`` at ``p`` by differences along ``[X_H, scale grad H / |grad H|^2]``.

    Coordinate differences are ill-conditioned where the glued flow shears
    strongly; along this frame both columns are O(1) for the angle and action.
    """
    p = np.asarray(p, dtype=float)
    h = 1e-6
    g = np.array([(energy((p[0] + h, p[1])) - energy((p[0] - h, p[1]))) / (2 * h),
                  (energy((p[0], p[1] + h)) - energy((p[0], p[1] - h))) / (2 * h)])
    X = (np.array(flow(p, 1e-4)) - np.array(flow(p, -1e-4))) / 2e-4
    V = np.column_stack([X, scale * g / g.dot(g)])
    J1 = geometry.jacobian_fd_frame(transform, p, V, 1e-3, period=(1.0, np.inf))
    J2 = geometry.jacobian_fd_frame(transform, p, V, 5e-4, period=(1.0, np.inf))
    J = (4 * J2 - J1) / 3
    return abs(np.linalg.det(J) / np.linalg.det(V))


def _cap_transform(cap: surgery.CapModel, fam: int, nodes: int, radius_action: bool = False):
    """Action-angle transform of a cap family; optionally with the action integrated over ``r``.

    The second form (the period integrated along the section coordinate
    instead of the energy) is the negative control of the determinant check.
    """
    strip = cap.strip
    sd = surgery.family_section_data(cap, fam, np.linspace(0.35, 0.9, nodes) * cap.eta ** 3)
    start, crossing = surgery.family_section(cap, fam)
    if radius_action:
        r = np.array([start(e)[1] for e in sd.energies])
        spline = CubicSpline(r, sd.periods) if r[0] < r[-1] else CubicSpline(r[::-1], sd.periods[::-1])
        anti = spline.antiderivative()
        sd = surgery.SectionData(sd.base_point, sd.energies, sd.periods,
                                 np.asarray(anti(r) - anti(r[0])))

    def flow(q, t):
        return surgery.cap_flow(strip, q, t)

    def energy(q):
        return float(strip.energy(q[0], q[1]))

    def transform(q):
        return np.array(surgery.action_angle(sd, q, flow, crossing, energy))

    return sd, start, flow, energy, transform


def check_action_negative_control(cap: surgery.CapModel) -> Check:
    """An action integrated over the section coordinate must fail the determinant check."""
    worst = math.inf
    eta3 = cap.eta ** 3
    for fam, F in enumerate(cap.families):
        sd, start, flow, energy, transform = _cap_transform(cap, fam, 40, radius_action=True)
        E = F.sign * 0.6 * eta3
        p = np.array(surgery.action_angle_inverse(sd, 0.3, sd.action(E), flow, start))
        worst = min(worst, abs(frame_det(transform, flow, energy, p, eta3) - 1.0))
    return Check("AC6 negative control: action over r is rejected (|det| - 1 > 1e-3)", worst, 1e-3,
                 bool(worst > 1e-3))


def check_action_angle(cap: surgery.CapModel, points: int = 3, rng: Optional[np.random.Generator] = None,
                       nodes: int = 100) -> Check:
    rng = rng or np.random.default_rng(0)
    eta3 = cap.eta ** 3
    rt = hc = dd = period_gap = 0.0
    for fam in range(len(cap.families)):
        F = cap.families[fam]
        sd, start, flow, energy, transform = _cap_transform(cap, fam, nodes)
        for level in (0.45, 0.6, 0.8):
            E = F.sign * level * eta3
            advances = []
            for ang in (np.arange(points) + rng.random()) / points:
                p = np.array(surgery.action_angle_inverse(sd, ang, sd.action(E), flow, start))
                th, A = transform(p)
                rt = max(rt, abs((th - ang + 0.5) % 1 - 0.5), abs(A - sd.action(E)))
                th1, A1 = transform(flow(p, 1.0))
                hc = max(hc, abs(A1 - A))
                advances.append((th1 - th) % 1.0)
                dd = max(dd, abs(frame_det(transform, flow, energy, p, eta3) - 1.0))
            # a horizontal circle is rotated rigidly: one angle advance for the whole level
            adv = np.asarray(advances)
            adv = (adv - adv[0] + 0.5) % 1.0 - 0.5
            hc = max(hc, float(adv.max() - adv.min()))
            gap = (advances[0] - 1.0 / sd.period(E) + 0.5) % 1.0 - 0.5
            period_gap = max(period_gap, abs(gap))
    c = Check("AC6 cap action-angle: round trip, horizontal circles, |det| = 1",
              max(rt / 1e-8, hc / 1e-8, dd / 1e-7), 1.0, bool(rt < 1e-8 and hc < 1e-8 and dd < 1e-7),
              {"roundtrip": rt, "horizontal_circle": hc, "det": dd, "advance_vs_period": period_gap})
    return c


def _exit_points(cap: surgery.CapModel, m: int, rng: np.random.Generator, lo: float = 0.2):
    """Strip points whose remaining out-strip time lies in ``[lo, 1]``, uniform in that time."""
    strip = cap.strip
    th = rng.random(40 * m) * strip.period
    r = -cap.eta * rng.random(40 * m)
    e = np.abs(strip.energy(th, r))
    keep = (e <= 0.9 * strip.level) & (e >= 0.1 * strip.level)
    th, r = th[keep], r[keep]
    t_out = strip.out_strip_time(th, r)
    ok = np.isfinite(t_out) & (t_out >= 1.0)
    th, r, t_out = th[ok][:m], r[ok][:m], t_out[ok][:m]
    u = lo + (1.0 - lo) * rng.random(len(th))
    th, r = ham.flow_arrays(strip.sys, th, r, t_out - u)
    return np.mod(th, strip.period), r


def check_glue(cap: surgery.CapModel, m: int, steps: int, rng: np.random.Generator) -> Check:
    strip = cap.strip
    eq = 0.0
    th, r = _exit_points(cap, m, rng)
    for a_t, a_r in zip(th, r):
        t_out = float(strip.out_strip_time(a_t, a_r))
        i = int(strip.out_saddle(int(strip.sector_of(a_t)))) // 2
        d = 0.1 * rng.random() * t_out
        moved = ham.flow_arrays(strip.sys, a_t, a_r, d)
        a = surgery.glue_map(strip, i, (float(moved[0]), float(moved[1])))
        g = surgery.glue_map(strip, i, (float(a_t), float(a_r)))
        b = ham.flow_arrays(strip.sys, g[0], g[1], d)
        eq = max(eq, abs((a[0] - float(b[0]) + 0.5 * strip.period) % strip.period - 0.5 * strip.period),
                 abs(a[1] - float(b[1])))
    # the same points against their in-strip partners, stepped without normalizing
    alt_t, alt_r = surgery.alternate_arrays(strip, th, r)
    rep = 0.0
    a_t, a_r, b_t, b_r = th, r, alt_t, alt_r
    for _ in range(steps):
        a_t, a_r = surgery.strip_step(strip, a_t, a_r, 1.0, normalize=False)
        b_t, b_r = surgery.strip_step(strip, b_t, b_r, 1.0, normalize=False)
        a_t, a_r = surgery.normalize_arrays(strip, a_t, a_r)
        b_t, b_r = surgery.normalize_arrays(strip, b_t, b_r)
        dt = np.abs((a_t - b_t + 0.5 * strip.period) % strip.period - 0.5 * strip.period)
        rep = max(rep, float(np.max(dt + np.abs(a_r - b_r))))
    partners = int(np.sum((alt_t != th) | (alt_r != r)))
    return Check("AC7 glue equivariance and representative independence", max(eq / 1e-9, rep / 1e-8), 1.0,
                 bool(eq < 1e-9 and rep < 1e-8),
                 {"equivariance": eq, "representatives": rep, "points": int(len(th)), "distinct_partners": partners})


def check_cocycle(s: at.Surface, n: int, rng: np.random.Generator) -> Check:
    worst = 0.0
    eps = s.epsilon
    # hole -> bulk -> hole round trips in the overlap annulus
    th = rng.random(n)
    r = eps * (0.82 + 0.17 * rng.random(n))
    for a, h in [(a, h) for a in range(len(s.sheets)) for h in range(4)]:
        for t, rr in zip(th[:50], r[:50]):
            p = at.ChartPoint(a, at.HOLE, h, -1, float(t), float(rr))
            q = at.transition(s, p, (a, at.BULK, -1, -1))
            back = at.transition(s, q, (a, at.HOLE, h, -1))
            worst = max(worst, abs((back.x - t + 0.5) % 1 - 0.5), abs(back.y - rr))
            if s.role[a, h] == 2:
                # seam triple: partner collar -> its bulk -> this hole (r < 0) -> partner
                pa, ph = int(s.partner_sheet[a, h]), int(s.partner_hole[a, h])
                u = at.transition(s, p, (pa, at.HOLE, ph, -1))
                v = at.transition(s, at.ChartPoint(a, at.BULK, -1, -1, q.x, q.y), (a, at.HOLE, h, -1))
                w = at.transition(s, u, (a, at.HOLE, h, -1))
                worst = max(worst, abs((w.x - v.x + 0.5) % 1 - 0.5), abs(w.y - v.y))
    if s.cap is not None:
        b = at.sample(s, n, rng, "cap")
        dsk = b.take(np.flatnonzero(b.kind == at.DISK)[:200])
        for p in dsk.points():
            q = at.transition(s, p, (p.sheet, at.HOLE, p.hole, -1))
            back = at.transition(s, q, (p.sheet, at.DISK, p.hole, p.fam))
            worst = max(worst, abs(back.x - p.x), abs(back.y - p.y))
    return _below("AC8 transition cocycle", worst, 1e-9)


def check_deck(n: int, rng: np.random.Generator) -> Check:
    s = at.assemble(at.SurfaceSpec(kind="klein_cover_torus", weight_samples=100_000))
    b = at.sample(s, n, rng)
    left = at.deck_batch(s, at.map_batch(s, b))
    right = at.map_batch(s, at.deck_batch(s, b))
    lx, ly = at.express(s, left, right, near=True)
    d = np.hypot(lx - right.x, ly - right.y)
    twice = at.deck_batch(s, at.deck_batch(s, b))
    tx, ty = at.express(s, twice, b, near=True)
    return _below("AC8 Klein-cover deck commutation", d.max(), 1e-10, involution=float(np.max(np.hypot(tx - b.x, ty - b.y))))


def check_measure(s: at.Surface, n: int, rng: np.random.Generator, rect=(0.42, 0.58, 0.42, 0.58)) -> Check:
    """Monte-Carlo ``mu(R)`` against ``mu(f^{-1} R)`` for a bulk rectangle around a fixed point."""
    x0, x1, y0, y1 = rect

    def inside(b: at.Batch):
        ref = at.Batch.bulk(np.zeros(len(b)), np.zeros(len(b)))
        ref.sheet = b.sheet
        free = (b.kind == at.BULK) | ((b.kind == at.HOLE) & (b.y >= 0))
        X = np.full(len(b), np.nan)
        Y = np.full(len(b), np.nan)
        idx = np.flatnonzero(free)
        X[idx], Y[idx] = at.express(s, b.take(idx), ref.take(idx), near=False)
        hit = np.zeros(len(b), dtype=bool)
        for sx, sy in ((X, Y), (np.mod(-X, 1.0), np.mod(-Y, 1.0))):
            hit |= (sx >= x0) & (sx < x1) & (sy >= y0) & (sy < y1)
        return hit

    chunk = 200_000
    before = after = 0
    var_sum = 0.0
    done = 0
    while done < n:
        m = min(chunk, n - done)
        b = at.normalize_batch(s, at.Batch.bulk(rng.random(m), rng.random(m)))
        h0 = inside(b)
        h1 = inside(at.map_batch(s, b))
        before += int(h0.sum())
        after += int(h1.sum())
        var_sum += float(np.sum((h1.astype(float) - h0) ** 2))
        done += m
    diff = (after - before) / n
    sigma = math.sqrt(max(var_sum / n - diff ** 2, 1e-300) / n)
    z = abs(diff) / sigma if sigma > 0 else 0.0
    return Check("AC8 measure preservation |mu(f^-1 R) - mu(R)| in sigma", z, 3.0, bool(z < 3.0),
                 {"mu_R": before / n, "mu_preimage": after / n, "sigma": sigma})


def check_island_mask(s: at.Surface, size: int) -> Check:
    m1 = figures.ppm_bytes(figures.island_mask(s, size))
    m2 = figures.ppm_bytes(figures.island_mask(s, size))
    frac = figures.mask_stochastic_fraction(figures.island_mask(s, size))
    w = s.weights
    ref = sum(v for k, v in w.items() if k.startswith("stochastic")) / sum(w.values())
    err = abs(frac / ref - 1.0)
    c = _below("AC9 island mask stochastic fraction vs chart weights", err, 0.01,
               mask_fraction=frac, weight_fraction=ref, identical=m1 == m2)
    c.passed = c.passed and m1 == m2
    return c


def run_suite(spec: at.SurfaceSpec, scale: str = "quick", seed: int = 0) -> List[Check]:
    """The whole invariant suite on one surface (plus the fixed fixtures)."""
    sz = SIZES[scale]
    rng = np.random.default_rng([int(seed), 0x5EED])
    s = at.assemble(spec)
    checks = [
        _timed(check_anosov),
        _timed(lambda: check_blowup(rng)),
        _timed(lambda: check_hamiltonian(rng)),
        _timed(lambda: check_symplectic_charts(s, sz["points"], rng)),
        _timed(lambda: check_symplectic_orbits(s, sz["orbit"], rng)),
        _timed(lambda: check_conjugacy(s, sz["bulk"], rng)),
        _timed(lambda: check_ftle_median(s, sz["ftle_seeds"], sz["ftle_n"], rng)),
        _timed(lambda: check_entropy(s, sz["entropy_m"], sz["ftle_n"], rng)),
        _timed(check_shear_fixture),
    ]
    if s.cap is not None:
        checks += [
            _timed(check_census),
            _timed(lambda: check_cap_ftle(s, sz["cap_seeds"], sz["cap_n"], rng)),
            _timed(lambda: check_level_drift(s, sz["drift_seeds"], sz["drift_n"], rng)),
            _timed(lambda: check_action_angle(s.cap, 3 if scale == "quick" else 6, rng)),
            _timed(lambda: check_action_negative_control(s.cap)),
            _timed(lambda: check_glue(s.cap, sz["glue"], sz["rep_steps"], rng)),
        ]
    checks += [
        _timed(lambda: check_cocycle(s, 1000, rng)),
        _timed(lambda: check_deck(sz["bulk"], rng)),
        _timed(lambda: check_measure(s, sz["mc"], rng)),
        _timed(lambda: check_island_mask(s, sz["mask"])),
    ]
    return checks
