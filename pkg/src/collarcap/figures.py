"""Deterministic writers (CSV, PPM P6, SVG 1.1) and the blown-down torus picture.

Pictures show one sheet as the unit square ``[0, 1)^2`` of the torus.  A
capped fixed point ``P`` is drawn as the disk ``pi d^2 / 2 < C`` around it,
``C`` the cap area, so that pixel areas of caps match the chart-area
weights (the quotient by ``-1`` halves areas near ``P``).

Heat maps use a fixed diverging color map with RGB anchors

    -1 -> ( 59,  76, 192)     0 -> (221, 221, 221)     +1 -> (180,   4,  38)

applied to ``value / scale`` clipped to ``[-1, 1]``.
"""
from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from . import atlas as at

COLOR_ANCHORS = ((-1.0, (59, 76, 192)), (0.0, (221, 221, 221)), (1.0, (180, 4, 38)))
STOCHASTIC_GREY = 128
CAP_WHITE = 255


def fmt(v) -> str:
    """Floats with 17 significant digits; integers and strings unchanged."""
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.write_text(csv_text(header, rows))
    return path


def ppm_bytes(rgb: np.ndarray) -> bytes:
    rgb = np.asarray(rgb, dtype=np.uint8)
    if rgb.ndim == 2:
        rgb = np.repeat(rgb[:, :, None], 3, axis=2)
    h, w, _ = rgb.shape
    return b"P6\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(rgb).tobytes()


def write_ppm(path, rgb: np.ndarray) -> Path:
    path = Path(path)
    path.write_bytes(ppm_bytes(rgb))
    return path


def colorize(values: np.ndarray, scale: float) -> np.ndarray:
    """Diverging map of ``values / scale``; non-finite values are black."""
    v = np.asarray(values, dtype=float)
    finite = np.isfinite(v)
    t = np.clip(np.where(finite, v, 0.0) / scale, -1.0, 1.0)
    xs = [a[0] for a in COLOR_ANCHORS]
    out = np.empty(v.shape + (3,), dtype=np.uint8)
    for c in range(3):
        out[..., c] = np.round(np.interp(t, xs, [a[1][c] for a in COLOR_ANCHORS])).astype(np.uint8)
    out[~finite] = 0
    return out


# -- blown-down picture ----------------------------------------------------------

def pixel_centers(size: int) -> Tuple[np.ndarray, np.ndarray]:
    """Pixel centers of a ``size x size`` raster; row 0 is the top (``y`` near 1)."""
    c = (np.arange(size) + 0.5) / size
    X, Y = np.meshgrid(c, c[::-1])
    return X, Y


def _offsets(s: at.Surface, hole: int, X, Y):
    dx = X - at.CENTERS[hole, 0]
    dy = Y - at.CENTERS[hole, 1]
    return dx - np.round(dx), dy - np.round(dy)


def cap_area(s: at.Surface) -> float:
    return s.cap.area if s.cap is not None else 0.0


def cap_pixels(s: at.Surface, sheet: int, X, Y) -> np.ndarray:
    """Hole index of the drawn cap containing each pixel, or -1."""
    out = np.full(np.shape(X), -1)
    C = cap_area(s)
    for a, h in s.capped_holes():
        if a != sheet:
            continue
        dx, dy = _offsets(s, h, X, Y)
        out[0.5 * math.pi * (dx * dx + dy * dy) < C] = h
    return out


def island_mask(s: at.Surface, size: int, sheet: int = 0) -> np.ndarray:
    """Grey-mask raster: stochastic pixels grey, cap pixels white."""
    X, Y = pixel_centers(size)
    caps = cap_pixels(s, sheet, X, Y)
    return np.where(caps >= 0, CAP_WHITE, STOCHASTIC_GREY).astype(np.uint8)


def mask_stochastic_fraction(mask: np.ndarray) -> float:
    return float(np.mean(mask == STOCHASTIC_GREY))


def picture_points(s: at.Surface, sheet: int, X, Y) -> at.Batch:
    """Chart points drawn at the given picture positions.

    Outside the drawn caps the picture is the torus itself.  A drawn cap is
    split into ``k + 1`` angular sectors (modulo the symmetry ``d -> -d``),
    one per family, each mapped onto that family's disk chart.
    """
    X = np.ravel(X)
    Y = np.ravel(Y)
    b = at.Batch.bulk(X, Y, sheet)
    caps = cap_pixels(s, sheet, X, Y)
    if np.any(caps >= 0):
        C = cap_area(s)
        nf = len(s.cap.families)
        for h in np.unique(caps[caps >= 0]):
            sel = caps == h
            dx, dy = _offsets(s, int(h), X[sel], Y[sel])
            F = s.frame
            u = F[0, 0] * dx + F[1, 0] * dy
            v = F[0, 1] * dx + F[1, 1] * dy
            phi = np.mod(np.arctan2(v, u), math.pi) / math.pi * nf
            fam = np.minimum(phi.astype(int), nf - 1)
            frac = 0.5 * math.pi * (dx * dx + dy * dy) / C
            ang = 2.0 * math.pi * (phi - fam)
            rad = np.sqrt(np.asarray(s.cap.switch_action)[fam] / math.pi * frac)
            idx = np.flatnonzero(sel)
            b.kind[idx] = at.DISK
            b.hole[idx] = h
            b.fam[idx] = fam
            b.x[idx] = rad * np.cos(ang)
            b.y[idx] = rad * np.sin(ang)
    return at.normalize_batch(s, b)


def picture_position(s: at.Surface, b: at.Batch) -> Tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`picture_points` (torus positions of chart points).

    Cap points whose energy is below the disk tables (next to the
    separatrix) are drawn on the cap rim.
    """
    X = np.full(len(b), np.nan)
    Y = np.full(len(b), np.nan)
    free = (b.kind == at.BULK) | ((b.kind == at.HOLE) & (b.y >= 0))
    if np.any(free):
        ref = at.Batch.bulk(np.zeros(int(free.sum())), np.zeros(int(free.sum())))
        ref.sheet = b.sheet[free]
        X[free], Y[free] = at.express(s, b.take(np.flatnonzero(free)), ref, near=False)
    capped = ~free
    if np.any(capped) and s.cap is not None:
        idx = np.flatnonzero(capped)
        fam = b.fam[idx].copy()
        x, y = b.x[idx].copy(), b.y[idx].copy()
        st = b.kind[idx] == at.HOLE
        if np.any(st):
            e = np.abs(s.cap.strip.energy(x[st], y[st]))
            ok = e >= s.cap.families[0].grid[0]
            f2, xd, yd = s.cap.strip_to_disk(x[st], y[st])
            sw = np.sqrt(np.asarray(s.cap.switch_action)[f2] / math.pi)
            ang = np.arctan2(yd, xd)
            rim = np.where(ok, np.hypot(xd, yd), sw)
            fam[st], x[st], y[st] = f2, rim * np.cos(ang), rim * np.sin(ang)
        nf = len(s.cap.families)
        C = cap_area(s)
        frac = math.pi * (x * x + y * y) / np.asarray(s.cap.switch_action)[fam]
        d = np.sqrt(2.0 * np.minimum(frac, 1.0) * C / math.pi)
        phi = (fam + np.mod(np.arctan2(y, x), 2 * math.pi) / (2 * math.pi)) / nf * math.pi
        u, v = d * np.cos(phi), d * np.sin(phi)
        F = s.frame
        cx = at.CENTERS[b.hole[idx], 0]
        cy = at.CENTERS[b.hole[idx], 1]
        X[idx] = np.mod(cx + F[0, 0] * u + F[0, 1] * v, 1.0)
        Y[idx] = np.mod(cy + F[1, 0] * u + F[1, 1] * v, 1.0)
    return X, Y


# -- SVG ------------------------------------------------------------------------

SVG_SIZE = 800
SVG_MARGIN = 20


def _svg_xy(X, Y):
    span = SVG_SIZE - 2 * SVG_MARGIN
    return SVG_MARGIN + X * span, SVG_MARGIN + (1.0 - Y) * span


def portrait_svg(s: at.Surface, chaotic: Tuple[np.ndarray, np.ndarray],
                 circles: List[Tuple[np.ndarray, np.ndarray]], sheet: int = 0) -> str:
    """Phase portrait: chaotic scatter, cap orbits, hole circles highlighted."""
    lines = ['<?xml version="1.0" encoding="UTF-8"?>',
             f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{SVG_SIZE}" '
             f'height="{SVG_SIZE}" viewBox="0 0 {SVG_SIZE} {SVG_SIZE}">',
             f'<rect x="0" y="0" width="{SVG_SIZE}" height="{SVG_SIZE}" fill="white"/>']
    span = SVG_SIZE - 2 * SVG_MARGIN
    lines.append(f'<rect x="{SVG_MARGIN}" y="{SVG_MARGIN}" width="{span}" height="{span}" '
                 'fill="none" stroke="black" stroke-width="1"/>')
    lines.append('<g fill="#555555">')
    px, py = _svg_xy(*chaotic)
    for a, b in zip(px, py):
        if np.isfinite(a):
            lines.append(f'<rect x="{a:.2f}" y="{b:.2f}" width="1" height="1"/>')
    lines.append('</g>')
    lines.append('<g fill="#1f4fbf">')
    for X, Y in circles:
        cx, cy = _svg_xy(X, Y)
        for a, b in zip(cx, cy):
            if np.isfinite(a):
                lines.append(f'<circle cx="{a:.2f}" cy="{b:.2f}" r="0.6"/>')
    lines.append('</g>')
    lines.append('<g fill="none" stroke="#c0141e" stroke-width="1.5">')
    C = cap_area(s)
    for h in range(4):
        role = s.role[sheet, h]
        rad = math.sqrt(2.0 * C / math.pi) if role == 0 else 0.004
        for ox in (0.0, 1.0):
            for oy in (0.0, 1.0):
                X, Y = at.CENTERS[h, 0] + ox, at.CENTERS[h, 1] + oy
                if X > 1.0 + rad or Y > 1.0 + rad:
                    continue
                cx, cy = _svg_xy(np.array([X]), np.array([Y]))
                lines.append(f'<circle cx="{cx[0]:.2f}" cy="{cy[0]:.2f}" r="{rad * span:.2f}"/>')
    lines.append('</g>')
    lines.append('</svg>')
    return "\n".join(lines) + "\n"

