"""Surfaces assembled from sheets of the blown-up torus quotient and caps.

Every sheet is a copy of the quotient torus with its four 2-torsion points
blown up.  A point of a surface lives in one of three chart kinds:

``BULK``
    quotient torus coordinates ``(x, y)``, canonical representative chosen by
    :func:`anosov.quotient_rep`;
``HOLE``
    collar coordinates ``(theta, r)`` of hole ``h``, ``theta in [0, 1)``.  For
    ``r >= 0`` this is the blow-up of ``P_h``; for ``r < 0`` it is either the
    strip of the cap glued to the hole or, on a seam, the partner collar
    (``r -> -r``);
``DISK``
    the blown-down elliptic chart ``(x, y)`` of a cap family.

Holes are capped, left as boundary circles, or glued in pairs (seams).
Orbits never cross a hole circle ``r = 0``: it is made of saddles and their
connections.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import anosov, hamiltonian as ham, surgery
from .blowup import BlowupChart, project_jacobian
from .errors import CoverageError, DomainError, SpecError
from .geometry import Tolerances

BULK, HOLE, DISK = 0, 1, 2
KIND_NAMES = {BULK: "bulk", HOLE: "hole", DISK: "disk"}
SURFACE_KINDS = ("sphere", "disk", "annulus", "pants", "torus", "klein_cover_torus", "genus_g")
ENTER_FRACTION = 0.81   # bulk -> collar when r < 0.81 eps (radius factor 0.9)
FD_RATIO = 1e-3
CENTERS = np.array(anosov.FIXED_POINTS)
R90 = np.array([[0.0, -1.0], [1.0, 0.0]])


@dataclass(frozen=True)
class ChartPoint:
    sheet: int
    kind: int
    hole: int
    fam: int
    x: float
    y: float

    @property
    def chart_id(self) -> Tuple[int, int, int, int]:
        return (self.sheet, self.kind, self.hole, self.fam)

    @property
    def local(self) -> Tuple[float, float]:
        return (self.x, self.y)

    @classmethod
    def bulk(cls, x, y, sheet=0):
        return cls(sheet, BULK, -1, -1, float(x), float(y))

    @classmethod
    def collar(cls, hole, theta, r, sheet=0):
        return cls(sheet, HOLE, hole, -1, float(theta), float(r))

    @classmethod
    def disk(cls, hole, fam, x, y, sheet=0):
        return cls(sheet, DISK, hole, fam, float(x), float(y))


@dataclass
class Batch:
    """Structure of arrays for many chart points."""
    sheet: np.ndarray
    kind: np.ndarray
    hole: np.ndarray
    fam: np.ndarray
    x: np.ndarray
    y: np.ndarray

    @classmethod
    def of(cls, points: Sequence[ChartPoint]) -> "Batch":
        return cls(np.array([p.sheet for p in points], dtype=int),
                   np.array([p.kind for p in points], dtype=int),
                   np.array([p.hole for p in points], dtype=int),
                   np.array([p.fam for p in points], dtype=int),
                   np.array([p.x for p in points], dtype=float),
                   np.array([p.y for p in points], dtype=float))

    @classmethod
    def bulk(cls, x, y, sheet=0) -> "Batch":
        x = np.asarray(x, dtype=float)
        n = x.shape[0]
        return cls(np.full(n, sheet), np.full(n, BULK), np.full(n, -1), np.full(n, -1),
                   x.copy(), np.asarray(y, dtype=float).copy())

    def __len__(self):
        return self.x.shape[0]

    def copy(self) -> "Batch":
        return Batch(*(a.copy() for a in (self.sheet, self.kind, self.hole, self.fam, self.x, self.y)))

    def take(self, idx) -> "Batch":
        return Batch(*(a[idx] for a in (self.sheet, self.kind, self.hole, self.fam, self.x, self.y)))

    def put(self, idx, other: "Batch"):
        for name in ("sheet", "kind", "hole", "fam", "x", "y"):
            getattr(self, name)[idx] = getattr(other, name)

    def point(self, i) -> ChartPoint:
        return ChartPoint(int(self.sheet[i]), int(self.kind[i]), int(self.hole[i]), int(self.fam[i]),
                          float(self.x[i]), float(self.y[i]))

    def points(self) -> List[ChartPoint]:
        return [self.point(i) for i in range(len(self))]


@dataclass(frozen=True)
class HoleSpec:
    role: str                                   # cap | boundary | seam
    partner: Optional[Tuple[int, int]] = None   # (sheet, hole) for seams
    flip: int = 1                               # seam: theta -> flip * theta + shift
    shift: float = 0.0


@dataclass(frozen=True)
class Sheet:
    direction: int
    holes: Tuple[HoleSpec, HoleSpec, HoleSpec, HoleSpec]


@dataclass(frozen=True)
class SurfaceSpec:
    kind: str = "sphere"
    epsilon: float = 0.01
    eta: float = 0.05
    genus: int = 2
    profile: Tuple[float, ...] = (anosov.LAMBDA,)
    seed: int = 0
    weight_samples: int = 1_000_000

    def validate(self):
        if self.kind not in SURFACE_KINDS:
            raise SpecError(f"unknown surface kind {self.kind!r}; expected one of {SURFACE_KINDS}")
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise SpecError("epsilon must be positive")
        # blown-up disks of radius sqrt(2 eps / pi) around points 1/2 apart
        if math.sqrt(2.0 * self.epsilon / math.pi) >= 0.25 or self.epsilon >= 0.125:
            raise SpecError(f"epsilon={self.epsilon} too large: blown-up disks overlap")
        if not (0 < self.eta < 0.5):
            raise SpecError("eta must lie in (0, 0.5)")
        prof = tuple(float(c) for c in self.profile)
        if len(prof) < 1 or abs(prof[0] - anosov.LAMBDA) > 1e-12 or any(c != 0.0 for c in prof[1:]):
            raise SpecError("surface collars need the constant rate ln(9+4 sqrt 5) to match the "
                            "Anosov layer")
        if self.kind == "genus_g" and (not isinstance(self.genus, int) or self.genus < 2):
            raise SpecError(f"genus_g needs an integer genus >= 2, got {self.genus}")
        if self.weight_samples < 1000:
            raise SpecError("weight_samples must be at least 1000")
        if not (0 <= int(self.seed) < 2 ** 64):
            raise SpecError("seed must be an unsigned 64-bit integer")
        return self

    def as_dict(self) -> dict:
        return {"kind": self.kind, "epsilon": self.epsilon, "eta": self.eta, "genus": self.genus,
                "profile": list(self.profile), "seed": int(self.seed),
                "weight_samples": self.weight_samples}

    @classmethod
    def from_dict(cls, data: dict) -> "SurfaceSpec":
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        if "profile" in known:
            known["profile"] = tuple(known["profile"])
        return cls(**known)


@lru_cache(maxsize=8)
def collar_cap(eta: float) -> surgery.CapModel:
    """The k = 1 cap on the collar Hamiltonian (shared by all capped holes)."""
    return surgery.build_cap(ham.HamiltonianSystem("collar", ham.Profile(), 1), eta, 1)


def _sheets_for(spec: SurfaceSpec) -> List[Sheet]:
    cap, bnd = HoleSpec("cap"), HoleSpec("boundary")
    kind = spec.kind
    if kind == "sphere":
        return [Sheet(1, (cap, cap, cap, cap))]
    if kind == "disk":
        return [Sheet(1, (bnd, cap, cap, cap))]
    if kind == "annulus":
        return [Sheet(1, (cap, bnd, bnd, cap))]
    if kind == "pants":
        return [Sheet(1, (cap, bnd, bnd, bnd))]
    if kind == "torus":
        return [Sheet(1, (cap, HoleSpec("seam", (0, 2), -1, 0.0), HoleSpec("seam", (0, 1), -1, 0.0), cap))]
    if kind == "klein_cover_torus":
        s0 = Sheet(1, (cap, HoleSpec("seam", (1, 2), 1, 0.5), HoleSpec("seam", (1, 1), 1, 0.5), cap))
        s1 = Sheet(-1, (cap, HoleSpec("seam", (0, 2), 1, 0.5), HoleSpec("seam", (0, 1), 1, 0.5), cap))
        return [s0, s1]
    # genus_g: a ring of 2g-2 pants, consecutive sheets glued h3 <-> h2 and pairs glued h1 <-> h1
    m = 2 * spec.genus - 2
    holes: List[List[HoleSpec]] = [[cap, bnd, bnd, bnd] for _ in range(m)]
    for j in range(m):
        nxt = (j + 1) % m
        holes[j][3] = HoleSpec("seam", (nxt, 2), -1, 0.0)
        holes[nxt][2] = HoleSpec("seam", (j, 3), -1, 0.0)
    for i in range(m // 2):
        holes[2 * i][1] = HoleSpec("seam", (2 * i + 1, 1), -1, 0.0)
        holes[2 * i + 1][1] = HoleSpec("seam", (2 * i, 1), -1, 0.0)
    return [Sheet(1, tuple(h)) for h in holes]


class Surface:
    """An assembled surface; immutable after :func:`assemble`."""

    def __init__(self, spec: SurfaceSpec, sheets: List[Sheet], cap: Optional[surgery.CapModel],
                 tolerances: Tolerances = Tolerances()):
        self.spec = spec
        self.sheets = tuple(sheets)
        self.cap = cap
        self.tolerances = tolerances
        self.epsilon = spec.epsilon
        self.frame = anosov.eigen_data().rotation
        self.lam = anosov.LAMBDA
        self.sys = ham.HamiltonianSystem("collar", ham.Profile(), 1)
        self.direction = np.array([s.direction for s in sheets])
        n = len(sheets)
        self.role = np.zeros((n, 4), dtype=int)       # 0 cap, 1 boundary, 2 seam
        self.partner_sheet = np.full((n, 4), -1)
        self.partner_hole = np.full((n, 4), -1)
        self.seam_flip = np.ones((n, 4))
        self.seam_shift = np.zeros((n, 4))
        for a, sh in enumerate(sheets):
            for h, hs in enumerate(sh.holes):
                self.role[a, h] = {"cap": 0, "boundary": 1, "seam": 2}[hs.role]
                if hs.role == "seam":
                    self.partner_sheet[a, h], self.partner_hole[a, h] = hs.partner
                    self.seam_flip[a, h] = hs.flip
                    self.seam_shift[a, h] = hs.shift
        self.weights: Dict[str, float] = {}
        self.report: dict = {}

    @property
    def kind(self) -> str:
        return self.spec.kind

    @property
    def has_deck(self) -> bool:
        return self.kind == "klein_cover_torus"

    def chart(self, sheet: int, hole: int) -> BlowupChart:
        return BlowupChart(tuple(CENTERS[hole]), self.frame, self.epsilon, 1)

    def capped_holes(self) -> List[Tuple[int, int]]:
        return [(a, h) for a in range(len(self.sheets)) for h in range(4) if self.role[a, h] == 0]

    def seams(self) -> List[Tuple[Tuple[int, int], Tuple[int, int]]]:
        out = []
        for a in range(len(self.sheets)):
            for h in range(4):
                if self.role[a, h] == 2:
                    pair = ((a, h), (int(self.partner_sheet[a, h]), int(self.partner_hole[a, h])))
                    if pair[0] < pair[1]:
                        out.append(pair)
        return out

    def chart_ids(self) -> List[Tuple[int, int, int, int]]:
        ids = []
        for a in range(len(self.sheets)):
            ids.append((a, BULK, -1, -1))
            for h in range(4):
                ids.append((a, HOLE, h, -1))
                if self.role[a, h] == 0:
                    ids.extend((a, DISK, h, f) for f in range(len(self.cap.families)))
        return ids


def assemble(spec: SurfaceSpec, tolerances: Tolerances = Tolerances()) -> Surface:
    spec.validate()
    sheets = _sheets_for(spec)
    # every seam must be matched by its partner
    for a, sh in enumerate(sheets):
        for h, hs in enumerate(sh.holes):
            if hs.role == "seam":
                b, g = hs.partner
                back = sheets[b].holes[g]
                if back.role != "seam" or back.partner != (a, h) or back.flip != hs.flip:
                    raise SpecError(f"unmatched seam at sheet {a} hole {h}")
    if spec.kind == "genus_g":
        m = len(sheets)
        if m != 2 * spec.genus - 2:
            raise SpecError(f"genus {spec.genus} needs {2 * spec.genus - 2} pants, got {m}")
    needs_cap = any(hs.role == "cap" for sh in sheets for hs in sh.holes)
    cap = collar_cap(spec.eta) if needs_cap else None
    surf = Surface(spec, sheets, cap, tolerances)
    surf.weights, mc = area_weights(surf, spec.weight_samples, spec.seed)
    surf.report = assembly_report(surf, mc)
    return surf


# -- area weights and sampling ---------------------------------------------

def _cap_box_sample(cap: surgery.CapModel, rng: np.random.Generator, n: int):
    th = rng.random(n) * cap.strip.period
    r = -cap.eta * rng.random(n)
    inside = np.abs(cap.strip.energy(th, r)) <= cap.strip.level
    inside &= ~(cap.strip.in_strip_time(th, r) < 1.0)
    return th, r, inside


def area_weights(s: Surface, samples: int, seed: int):
    """Monte-Carlo chart-area weights; returns ``(weights, diagnostics)``.

    The stochastic part of each sheet is the blown-up quotient torus whose
    area 1/2 is preserved by the blow-up; it is also estimated by sampling
    the torus, which checks that the hole charts cover only the collars.
    Cap areas are estimated in the strip box and compared with the exact
    action integrals.
    """
    rng = np.random.default_rng([int(seed), 0xA4EA])
    weights: Dict[str, float] = {}
    diag: dict = {"samples": samples}
    for a in range(len(s.sheets)):
        weights[f"stochastic/{a}"] = 0.5
    if s.cap is not None:
        th, r, inside = _cap_box_sample(s.cap, rng, samples)
        p = inside.mean()
        box = s.cap.strip.period * s.cap.eta
        area = p * box
        se = math.sqrt(p * (1 - p) / samples) * box
        diag["cap_area_mc"] = area
        diag["cap_area_mc_se"] = se
        diag["cap_area_quadrature"] = s.cap.area
        for a, h in s.capped_holes():
            weights[f"cap/{a}/{h}"] = area
    total = sum(weights.values())
    diag["total_area"] = total
    diag["stochastic_fraction"] = sum(v for k, v in weights.items() if k.startswith("stochastic")) / total
    return weights, diag


def sample(s: Surface, n: int, rng: np.random.Generator, region: Optional[str] = None) -> Batch:
    """Area-uniform sample; ``region`` restricts to ``'stochastic'`` or ``'cap'``."""
    keys = [k for k in sorted(s.weights) if region is None or k.startswith(region)]
    if not keys:
        raise SpecError(f"surface {s.kind} has no {region} region")
    w = np.array([s.weights[k] for k in keys])
    counts = rng.multinomial(n, w / w.sum())
    parts = []
    for key, c in zip(keys, counts):
        if c == 0:
            continue
        bits = key.split("/")
        if bits[0] == "stochastic":
            a = int(bits[1])
            x, y, _ = anosov.quotient_rep_array(rng.random(c), rng.random(c))
            parts.append(Batch.bulk(x, y, a))
        else:
            a, h = int(bits[1]), int(bits[2])
            th_list, r_list, got = [], [], 0
            while got < c:
                th, r, ok = _cap_box_sample(s.cap, rng, max(4 * c, 256))
                th_list.append(th[ok])
                r_list.append(r[ok])
                got += int(ok.sum())
            th = np.concatenate(th_list)[:c]
            r = np.concatenate(r_list)[:c]
            parts.append(Batch(np.full(c, a), np.full(c, HOLE), np.full(c, h), np.full(c, -1), th, r))
    out = Batch(*(np.concatenate([getattr(p, f) for p in parts])
                  for f in ("sheet", "kind", "hole", "fam", "x", "y")))
    return normalize_batch(s, out)


# -- normalization -----------------------------------------------------------

def _project_raw(s: Surface, hole, theta, r):
    rho = np.sqrt(2.0 * np.asarray(r) / math.pi)
    a = math.pi * np.asarray(theta)
    u, v = rho * np.cos(a), rho * np.sin(a)
    F = s.frame
    cen = CENTERS[np.asarray(hole)]
    return cen[..., 0] + F[0, 0] * u + F[0, 1] * v, cen[..., 1] + F[1, 0] * u + F[1, 1] * v


def _lift_raw(s: Surface, hole, x, y):
    cen = CENTERS[np.asarray(hole)]
    dx = np.asarray(x) - cen[..., 0]
    dy = np.asarray(y) - cen[..., 1]
    dx = dx - np.round(dx)
    dy = dy - np.round(dy)
    F = s.frame
    u = F[0, 0] * dx + F[1, 0] * dy
    v = F[0, 1] * dx + F[1, 1] * dy
    return np.mod(np.arctan2(v, u) / math.pi, 1.0), 0.5 * math.pi * (dx * dx + dy * dy)


def normalize_batch(s: Surface, b: Batch, tol: float = 1e-12) -> Batch:
    """Canonical chart and coordinates for every point (idempotent)."""
    b = b.copy()
    # caps: strip representatives and disk hand-offs
    capish = ((b.kind == HOLE) & (b.y < 0) & (s.role[b.sheet, np.maximum(b.hole, 0)] == 0)) | (b.kind == DISK)
    if np.any(capish):
        idx = np.flatnonzero(capish)
        fam = np.where(b.kind[idx] == DISK, b.fam[idx], surgery.STRIP)
        st = fam == surgery.STRIP
        th, r = b.x[idx][st], b.y[idx][st]
        strip = s.cap.strip
        bad = (r < -strip.eta * (1 + 1e-9)) | (np.abs(strip.energy(th, r)) > strip.level * (1 + 1e-9))
        if np.any(bad):
            j = idx[st][np.flatnonzero(bad)[0]]
            raise CoverageError(f"strip point {b.point(j)} outside the cap")
        f2, x2, y2 = surgery.cap_normalize(s.cap, fam, b.x[idx], b.y[idx])
        b.fam[idx] = np.where(f2 == surgery.STRIP, -1, f2)
        b.kind[idx] = np.where(f2 == surgery.STRIP, HOLE, DISK)
        b.x[idx] = np.where(f2 == surgery.STRIP, np.mod(x2, 1.0), x2)
        b.y[idx] = y2
    # seams: negative side is the partner's collar
    seam = (b.kind == HOLE) & (b.y < 0) & (s.role[b.sheet, np.maximum(b.hole, 0)] == 2)
    if np.any(seam):
        a, h = b.sheet[seam], b.hole[seam]
        b.x[seam] = np.mod(s.seam_flip[a, h] * b.x[seam] + s.seam_shift[a, h], 1.0)
        b.y[seam] = -b.y[seam]
        b.sheet[seam] = s.partner_sheet[a, h]
        b.hole[seam] = s.partner_hole[a, h]
    hole_neg = (b.kind == HOLE) & (b.y < 0) & (s.role[b.sheet, np.maximum(b.hole, 0)] == 1)
    if np.any(hole_neg & (b.y < -tol)):
        j = np.flatnonzero(hole_neg & (b.y < -tol))[0]
        raise CoverageError(f"point {b.point(j)} below a boundary circle")
    b.y[hole_neg] = 0.0
    # collars beyond epsilon belong to the bulk
    leave = (b.kind == HOLE) & (b.y > s.epsilon)
    if np.any(leave):
        px, py = _project_raw(s, b.hole[leave], b.x[leave], b.y[leave])
        b.x[leave], b.y[leave] = px, py
        b.kind[leave] = BULK
        b.hole[leave] = -1
    bulk = b.kind == BULK
    if np.any(bulk):
        qx, qy, _ = anosov.quotient_rep_array(b.x[bulk], b.y[bulk])
        b.x[bulk], b.y[bulk] = qx, qy
        idx = np.flatnonzero(bulk)
        for h in range(4):
            th, r = _lift_raw(s, h, b.x[idx], b.y[idx])
            enter = (r < ENTER_FRACTION * s.epsilon) & (b.kind[idx] == BULK)
            if np.any(enter):
                sel = idx[enter]
                b.x[sel], b.y[sel] = th[enter], r[enter]
                b.kind[sel] = HOLE
                b.hole[sel] = h
    b.x[b.kind == HOLE] = np.mod(b.x[b.kind == HOLE], 1.0)
    b.fam[b.kind != DISK] = -1
    return b


def normalize(s: Surface, p: ChartPoint) -> ChartPoint:
    return normalize_batch(s, Batch.of([p])).point(0)


# -- transitions ---------------------------------------------------------------

def _unwrap(v, ref, period=1.0):
    return ref + np.mod(v - ref + 0.5 * period, period) - 0.5 * period


def _bulk_near(x, y, rx, ry):
    """Representative of ``+-(x, y)`` modulo the lattice nearest to ``(rx, ry)``."""
    ax = _unwrap(x, rx)
    ay = _unwrap(y, ry)
    bx = _unwrap(-np.asarray(x), rx)
    by = _unwrap(-np.asarray(y), ry)
    da = (ax - rx) ** 2 + (ay - ry) ** 2
    db = (bx - rx) ** 2 + (by - ry) ** 2
    use_b = db < da
    return np.where(use_b, bx, ax), np.where(use_b, by, ay)


def express(s: Surface, b: Batch, ref: Batch, near: bool = True) -> Tuple[np.ndarray, np.ndarray]:
    """Coordinates of the points ``b`` in the charts of ``ref``.

    With ``near`` the multi-valued charts (quotient torus, angle, glued
    strips) pick the representative closest to the reference coordinates;
    otherwise canonical values are returned.  Raises :class:`DomainError`
    when a point is not in the overlap.
    """
    n = len(b)
    x = b.x.copy()
    y = b.y.copy()
    sheet = b.sheet.copy()
    kind = b.kind.copy()
    hole = b.hole.copy()
    # seams: move points to the reference sheet through the matching seam
    other = sheet != ref.sheet
    if np.any(other):
        ok = (kind == HOLE) & (s.role[sheet, np.maximum(hole, 0)] == 2) & other
        a, h = sheet[ok], hole[ok]
        good = (s.partner_sheet[a, h] == ref.sheet[ok])
        if not np.all(ok[other]) or not np.all(good):
            raise DomainError("point and reference chart are on different sheets without a seam")
        x[ok] = s.seam_flip[a, h] * x[ok] + s.seam_shift[a, h]
        y[ok] = -y[ok]
        sheet[ok] = s.partner_sheet[a, h]
        hole[ok] = s.partner_hole[a, h]
    # the seam partner collar of the reference hole
    to_hole = ref.kind != BULK
    seam_side = (kind == HOLE) & to_hole & (hole != ref.hole) & (hole >= 0)
    if np.any(seam_side):
        a, h = sheet[seam_side], hole[seam_side]
        is_partner = (s.role[a, h] == 2) & (s.partner_sheet[a, h] == ref.sheet[seam_side]) & \
                     (s.partner_hole[a, h] == ref.hole[seam_side])
        idx = np.flatnonzero(seam_side)[is_partner]
        a, h = sheet[idx], hole[idx]
        x[idx] = s.seam_flip[a, h] * x[idx] + s.seam_shift[a, h]
        y[idx] = -y[idx]
        hole[idx] = ref.hole[idx]
    # disks to strips when the reference is not the same disk
    dsk = (kind == DISK) & ~((ref.kind == DISK) & (ref.fam == b.fam) & (ref.hole == hole))
    if np.any(dsk):
        for f in np.unique(b.fam[dsk]):
            sel = dsk & (b.fam == f)
            th, r = s.cap.disk_to_strip(int(f), x[sel], y[sel])
            x[sel], y[sel] = th, r
        kind[dsk] = HOLE
    # into the bulk
    tb = ref.kind == BULK
    if np.any(tb & (kind == HOLE)):
        sel = tb & (kind == HOLE)
        if np.any(y[sel] < 0):
            raise DomainError("cap or seam point has no bulk coordinates")
        x[sel], y[sel] = _project_raw(s, hole[sel], x[sel], y[sel])
        kind[sel] = BULK
    # into a hole chart
    th_ = (ref.kind != BULK)
    sel = th_ & (kind == BULK)
    if np.any(sel):
        t, r = _lift_raw(s, ref.hole[sel], x[sel], y[sel])
        x[sel], y[sel] = t, r
        kind[sel] = HOLE
        hole[sel] = ref.hole[sel]
    mism = th_ & (kind == HOLE) & (hole != ref.hole)
    if np.any(mism):
        # different holes of one sheet overlap only through the bulk
        if np.any(y[mism] < 0):
            raise DomainError("cap points of different holes do not overlap")
        px, py = _project_raw(s, hole[mism], x[mism], y[mism])
        t, r = _lift_raw(s, ref.hole[mism], px, py)
        x[mism], y[mism] = t, r
        hole[mism] = ref.hole[mism]
    # strip to disk
    td = (ref.kind == DISK) & (kind == HOLE)
    if np.any(td):
        if np.any(y[td] >= 0):
            raise DomainError("collar points are not in a disk chart")
        fam, xd, yd = s.cap.strip_to_disk(x[td], y[td])
        if np.any(fam != ref.fam[td]):
            raise DomainError("strip point belongs to another cap family")
        x[td], y[td] = xd, yd
        kind[td] = DISK
    if not near:
        bulk = ref.kind == BULK
        qx, qy, _ = anosov.quotient_rep_array(x[bulk], y[bulk])
        x[bulk], y[bulk] = qx, qy
        hl = ref.kind == HOLE
        x[hl] = np.mod(x[hl], 1.0)
        return x, y
    bulk = ref.kind == BULK
    if np.any(bulk):
        x[bulk], y[bulk] = _bulk_near(x[bulk], y[bulk], ref.x[bulk], ref.y[bulk])
    hl = ref.kind == HOLE
    if np.any(hl):
        x[hl] = _unwrap(x[hl], ref.x[hl])
        strip_pts = hl & (y < 0) & (s.role[ref.sheet, np.maximum(ref.hole, 0)] == 0)
        if np.any(strip_pts):
            ta, ra = surgery.alternate_arrays(s.cap.strip, x[strip_pts], y[strip_pts])
            ta = _unwrap(ta, ref.x[strip_pts])
            d0 = (x[strip_pts] - ref.x[strip_pts]) ** 2 + (y[strip_pts] - ref.y[strip_pts]) ** 2
            d1 = (ta - ref.x[strip_pts]) ** 2 + (ra - ref.y[strip_pts]) ** 2
            use = d1 < d0
            xs, ys = x[strip_pts], y[strip_pts]
            xs[use], ys[use] = ta[use], ra[use]
            x[strip_pts], y[strip_pts] = xs, ys
    return x, y


def transition(s: Surface, p: ChartPoint, target: Tuple[int, int, int, int]) -> ChartPoint:
    """Coordinates of ``p`` in chart ``target = (sheet, kind, hole, fam)``."""
    ref = Batch.of([ChartPoint(target[0], target[1], target[2], target[3], 0.0, 0.0)])
    x, y = express(s, Batch.of([p]), ref, near=False)
    q = ChartPoint(target[0], target[1], target[2], target[3], float(x[0]), float(y[0]))
    _check_in_chart(s, q)
    return q


def _check_in_chart(s: Surface, q: ChartPoint):
    if q.kind == HOLE:
        lo = -s.cap.eta if s.role[q.sheet, q.hole] == 0 else (-s.epsilon if s.role[q.sheet, q.hole] == 2 else 0.0)
        if not (lo - 1e-12 <= q.y <= s.epsilon * (1 + 1e-9)):
            raise DomainError(f"{q} outside the collar chart")
    elif q.kind == DISK:
        A = math.pi * (q.x ** 2 + q.y ** 2)
        if A > float(s.cap.families[q.fam].grid_action[0]):
            raise DomainError(f"{q} outside the disk chart")


# -- dynamics ----------------------------------------------------------------

def _raw_step(s: Surface, b: Batch, inverse: bool = False) -> Batch:
    """One step in the source charts, without normalization."""
    out = b.copy()
    d = s.direction[b.sheet] * (-1 if inverse else 1)
    bulk = b.kind == BULK
    if np.any(bulk):
        fwd = d[bulk] > 0
        x, y = b.x[bulk], b.y[bulk]
        out.x[bulk] = np.where(fwd, 13 * x + 8 * y, 5 * x - 8 * y)
        out.y[bulk] = np.where(fwd, 8 * x + 5 * y, -8 * x + 13 * y)
    col = (b.kind == HOLE) & (b.y >= 0)
    if np.any(col):
        th, r = ham.flow_arrays(s.sys, b.x[col], b.y[col], d[col].astype(float))
        out.x[col], out.y[col] = th, r
    for sign in (1, -1):
        st = (b.kind == HOLE) & (b.y < 0) & (d == sign)
        if np.any(st):
            th, r = surgery.strip_step(s.cap.strip, b.x[st], b.y[st], float(sign), normalize=False)
            out.x[st], out.y[st] = th, r
        for f in range(len(s.cap.families) if s.cap is not None else 0):
            sel = (b.kind == DISK) & (b.fam == f) & (d == sign)
            if np.any(sel):
                out.x[sel], out.y[sel] = s.cap.disk_step(f, b.x[sel], b.y[sel], float(sign))
    return out


def map_batch(s: Surface, b: Batch, n: int = 1, inverse: bool = False) -> Batch:
    for _ in range(n):
        b = normalize_batch(s, _raw_step(s, b, inverse))
    return b


def global_map(s: Surface, p: ChartPoint, inverse: bool = False) -> ChartPoint:
    return map_batch(s, Batch.of([p]), 1, inverse).point(0)


def cap_power_raw(s: Surface, b: Batch, n: int, inverse: bool = False) -> Batch:
    """``n`` steps of the cap dynamics in one shot, as a clock shift.

    Points must lie in caps (strip or disk charts).  The image is returned
    in strip coordinates of the source hole, unnormalized.
    """
    out = b.copy()
    d = s.direction[b.sheet] * (-1 if inverse else 1)
    dsk = b.kind == DISK
    for f in np.unique(b.fam[dsk]):
        sel = dsk & (b.fam == f)
        out.x[sel], out.y[sel] = s.cap.disk_to_strip(int(f), b.x[sel], b.y[sel])
    out.kind[dsk] = HOLE
    out.fam[dsk] = -1
    fam, energy, clock = s.cap.clock(out.x, out.y)
    for f in np.unique(fam):
        sel = fam == f
        out.x[sel], out.y[sel] = s.cap.from_clock(int(f), energy[sel], clock[sel] + d[sel] * float(n))
    return out


def cap_power(s: Surface, b: Batch, n: int, inverse: bool = False) -> Batch:
    return normalize_batch(s, cap_power_raw(s, b, n, inverse))


@dataclass(frozen=True)
class TangentStep:
    image: ChartPoint
    jacobian: np.ndarray


def _fd_pass(s: Surface, b: Batch, img: Batch, h: np.ndarray, inverse: bool, step=None) -> np.ndarray:
    J = np.empty((len(b), 2, 2))
    cols = []
    linear = step is None
    if linear:
        def step(bb):
            return _raw_step(s, bb, inverse)
    bulk = (b.kind == BULK) if linear else np.zeros(len(b), dtype=bool)
    if np.any(bulk):
        # the bulk step is linear with integer entries: shift the image by the
        # reduced center image instead of carrying coordinates of size ~20
        base = _raw_step(s, b, inverse)
        base.x[bulk] = base.x[bulk] - np.floor(base.x[bulk])
        base.y[bulk] = base.y[bulk] - np.floor(base.y[bulk])
        d = s.direction[b.sheet] * (-1 if inverse else 1)
    for ex, ey in ((1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)):
        st = b.copy()
        st.x = st.x + ex * h
        st.y = st.y + ey * h
        raw = step(st)
        if np.any(bulk):
            fwd = d[bulk] > 0
            hx, hy = ex * h[bulk], ey * h[bulk]
            raw.x[bulk] = base.x[bulk] + np.where(fwd, 13 * hx + 8 * hy, 5 * hx - 8 * hy)
            raw.y[bulk] = base.y[bulk] + np.where(fwd, 8 * hx + 5 * hy, -8 * hx + 13 * hy)
        cols.append(express(s, raw, img, near=True))
    J[:, 0, 0] = (cols[0][0] - cols[1][0]) / (2 * h)
    J[:, 1, 0] = (cols[0][1] - cols[1][1]) / (2 * h)
    J[:, 0, 1] = (cols[2][0] - cols[3][0]) / (2 * h)
    J[:, 1, 1] = (cols[2][1] - cols[3][1]) / (2 * h)
    return J


def fd_steps(s: Surface, b: Batch, img: Batch, h: float, ratio: float = FD_RATIO) -> np.ndarray:
    """Per-point stencil sizes: ``min(h, ratio * L)`` with ``L`` a local length scale.

    The blow-up charts bend on the scale ``rho = sqrt(2 r / pi)``; the glued
    strip maps are singular on the saddle legs and on ``r = 0``, and end at
    ``r = -eta``, so there ``L`` is the distance to them.
    """
    L = np.full(len(b), np.inf)
    into = (b.kind == BULK) & (img.kind == HOLE)
    L[into] = np.sqrt(2.0 * np.abs(img.y[into]) / math.pi) / 20.0
    out = (b.kind == HOLE) & (img.kind == BULK)
    L[out] = np.abs(b.y[out])
    for pts in (b, img):
        st = (pts.kind == HOLE) & (pts.y < 0)
        if np.any(st):
            leg = np.abs(pts.x[st] * 2.0 - np.round(pts.x[st] * 2.0)) / 2.0
            edge = np.minimum(np.abs(pts.y[st]), np.abs(pts.y[st] + s.cap.eta))
            L[st] = np.minimum(L[st], np.minimum(edge, leg))
    return np.minimum(h, ratio * L)


def fd_jacobian_batch(s: Surface, b: Batch, h: float = 1e-5, inverse: bool = False, step=None, img=None):
    """Differential of the global map in source/image charts by central differences.

    Two stencil sizes are combined by Richardson extrapolation (fourth-order
    truncation error).  The stencils are evaluated in extended precision:
    near the saddle legs the one-step map stretches by ~1e3, and double
    rounding alone would then spoil the determinant at the 1e-7 level.

    ``step`` replaces the one-step map by another raw map (batch in, batch
    out, source charts kept); ``img`` is then its normalized image.
    """
    if img is None:
        img = map_batch(s, b, 1, inverse)
    hs = fd_steps(s, b, img, h).astype(np.longdouble)
    wide = b.copy()
    wide.x = b.x.astype(np.longdouble)
    wide.y = b.y.astype(np.longdouble)
    J1 = _fd_pass(s, wide, img, hs, inverse, step)
    J2 = _fd_pass(s, wide, img, 0.5 * hs, inverse, step)
    return img, (4.0 * J2 - J1) / 3.0


def _analytic_transition(s: Surface, raw: ChartPoint, img: ChartPoint) -> np.ndarray:
    """Differential of the chart change ``raw -> img`` for bulk and collar charts."""
    T = np.eye(2)
    kind, hole, x, y = raw.kind, raw.hole, raw.x, raw.y
    if kind == HOLE and img.kind == HOLE and img.hole == hole:
        return T
    if kind == HOLE:
        T = project_jacobian(s.chart(raw.sheet, hole), x, y) @ T
        x, y = _project_raw(s, hole, x, y)
        kind = BULK
    qx, qy, flip = anosov.quotient_rep_flip(float(x), float(y))
    if flip:
        T = -T
    if img.kind == HOLE:
        t, r = _lift_raw(s, img.hole, qx, qy)
        T = np.linalg.inv(project_jacobian(s.chart(img.sheet, img.hole), float(t), float(r))) @ T
    return T


def global_tangent(s: Surface, p: ChartPoint, inverse: bool = False) -> TangentStep:
    """Image and differential of one step.

    Bulk and collar steps use the analytic differentials of ``A`` and of the
    closed-form flow composed with the blow-up transitions; cap points use
    central differences.
    """
    d = int(s.direction[p.sheet]) * (-1 if inverse else 1)
    if p.kind == BULK or (p.kind == HOLE and p.y >= 0):
        b = Batch.of([p])
        raw = _raw_step(s, b, inverse).point(0)
        img = normalize_batch(s, Batch.of([raw])).point(0)
        if p.kind == BULK:
            J = np.array(anosov.MATRIX if d > 0 else anosov.INVERSE, dtype=float)
        else:
            J = ham.flow_jacobian(s.sys, p.x, p.y, float(d))
        return TangentStep(img, _analytic_transition(s, raw, img) @ J)
    img, J = fd_jacobian_batch(s, Batch.of([p]), s.tolerances.fd_step, inverse)
    return TangentStep(img.point(0), J[0])


# -- deck transformation of the Klein cover -------------------------------------

SWAP_HOLE = np.array([0, 2, 1, 3])


def deck_batch(s: Surface, b: Batch) -> Batch:
    """Fixed-point free involution swapping the sheets of the Klein cover."""
    if not s.has_deck:
        raise SpecError(f"surface {s.kind} has no deck transformation")
    out = b.copy()
    out.sheet = 1 - b.sheet
    bulk = b.kind == BULK
    out.x[bulk], out.y[bulk] = -b.y[bulk], b.x[bulk]
    dsk = b.kind == DISK
    if np.any(dsk):
        for f in np.unique(b.fam[dsk]):
            sel = dsk & (b.fam == f)
            th, r = s.cap.disk_to_strip(int(f), b.x[sel], b.y[sel])
            out.x[sel], out.y[sel] = th, r
        out.kind[dsk] = HOLE
        out.fam[dsk] = -1
    hl = out.kind == HOLE
    out.hole[hl] = SWAP_HOLE[out.hole[hl]]
    out.x[hl] = out.x[hl] + 0.5
    return normalize_batch(s, out)


def deck(s: Surface, p: ChartPoint) -> ChartPoint:
    return deck_batch(s, Batch.of([p])).point(0)


# -- report ------------------------------------------------------------------

def assembly_report(s: Surface, mc: dict) -> dict:
    holes = []
    for a, sh in enumerate(s.sheets):
        for h, hs in enumerate(sh.holes):
            holes.append({"sheet": a, "hole": h, "center": list(anosov.FIXED_POINTS[h]),
                          "role": hs.role, "partner": list(hs.partner) if hs.partner else None,
                          "seam_flip": hs.flip, "seam_shift": hs.shift})
    rep = {
        "spec": s.spec.as_dict(),
        "tolerances": s.tolerances.as_dict(),
        "sheets": [{"index": a, "direction": sh.direction} for a, sh in enumerate(s.sheets)],
        "holes": holes,
        "caps": len(s.capped_holes()),
        "gluings": len(s.seams()),
        "charts": [{"sheet": c[0], "kind": KIND_NAMES[c[1]], "hole": c[2], "family": c[3]}
                   for c in s.chart_ids()],
        "chart_area_weights": dict(sorted(s.weights.items())),
        "area_estimates": mc,
        "deck_transformation": "swap sheets; bulk (x,y)->(-y,x); collars theta->theta+1/2, "
                               "holes 1<->2" if s.has_deck else None,
        "euler_characteristic": euler_characteristic(s),
    }
    if s.cap is not None:
        rep["cap"] = {"eta": s.cap.eta, "area": s.cap.area,
                      "census": _census_json(s.cap.census)}
    return rep


def _census_json(census):
    return [{"chart": c["chart"], "point": c["point"], "class": c["class"], "energy": c["energy"],
             "hessian_eigenvalues": c["hessian_eigenvalues"], "boundary": bool(c["boundary"])}
            for c in census]


def euler_characteristic(s: Surface) -> int:
    """Each sheet is a sphere minus four disks (chi = -2); caps add one each."""
    return -2 * len(s.sheets) + len(s.capped_holes())
