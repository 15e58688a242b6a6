"""Command line front end: ``collarcap {construct,orbit,ftle,portrait,cap,verify}``.

A run is described by one JSON document (see :data:`DEFAULTS`); ``--config``
merges a file over the defaults and command-line flags override both.  The
resolved configuration is echoed into every JSON the command writes.

Exit codes: 0 success, 1 numeric failure (including a failed ``verify``),
2 invalid configuration (an error JSON is printed to stdout).
"""
from __future__ import annotations

import argparse
import copy
import json
import logging
import math
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import analysis as an
from . import atlas as at
from . import figures, surgery, verify
from . import hamiltonian as ham
from .errors import CollarCapError
from .geometry import Tolerances

log = logging.getLogger("collarcap")

COMMANDS = ("construct", "orbit", "ftle", "portrait", "cap", "verify")

DEFAULTS = {
    "surface": {"kind": "sphere", "epsilon": 0.01, "eta": 0.05, "genus": 2,
                "profile": list(at.SurfaceSpec().profile), "weight_samples": 1_000_000},
    "seed": 0,
    "out": "out",
    "tolerances": Tolerances().as_dict(),
    "orbit": {"point": [0.3, 0.2], "sheet": 0, "n": 1000},
    "ftle": {"mode": "sample", "samples": 500, "n": 5000, "grid": 128, "threads": None},
    "portrait": {"chaotic_n": 20_000, "cap_orbits": 12, "cap_n": 400, "mask_size": 512},
    "cap": {"k": 1, "eta": 0.05, "profile": [1.0], "period": 2, "grid_size": 64},
    "verify": {"scale": "quick"},
}


class ConfigError(ValueError):
    pass


def _merge(base: dict, extra: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in extra.items():
        if key not in out:
            raise ConfigError(f"unknown config key {path}{key!r}")
        if isinstance(out[key], dict) and key != "tolerances":
            if not isinstance(value, dict):
                raise ConfigError(f"config key {path}{key!r} must be an object")
            out[key] = _merge(out[key], value, f"{path}{key}.")
        elif isinstance(out[key], dict):
            out[key] = {**out[key], **value}
        else:
            out[key] = value
    return out


def _positive_int(cfg, section, key, low=1):
    v = cfg[section][key]
    if not isinstance(v, int) or isinstance(v, bool) or v < low:
        raise ConfigError(f"{section}.{key} must be an integer >= {low}, got {v!r}")


def validate(cfg: dict, command: str) -> dict:
    """Check every field the command uses before any computation starts."""
    seed = cfg["seed"]
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2 ** 64:
        raise ConfigError(f"seed must be an unsigned 64-bit integer, got {seed!r}")
    try:
        Tolerances(**cfg["tolerances"])
        if command != "cap":
            surface_spec(cfg).validate()
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if command == "orbit":
        _positive_int(cfg, "orbit", "n")
        p = cfg["orbit"]["point"]
        if not (isinstance(p, list) and len(p) == 2 and all(isinstance(v, (int, float)) for v in p)):
            raise ConfigError("orbit.point must be [x, y]")
    elif command == "ftle":
        f = cfg["ftle"]
        if f["mode"] not in ("sample", "grid"):
            raise ConfigError("ftle.mode must be 'sample' or 'grid'")
        for key in ("samples", "n", "grid"):
            _positive_int(cfg, "ftle", key)
        if f["threads"] is not None:
            _positive_int(cfg, "ftle", "threads")
    elif command == "portrait":
        for key in ("chaotic_n", "cap_n", "mask_size"):
            _positive_int(cfg, "portrait", key)
        _positive_int(cfg, "portrait", "cap_orbits", 0)
    elif command == "cap":
        c = cfg["cap"]
        _positive_int(cfg, "cap", "k")
        _positive_int(cfg, "cap", "grid_size", 8)
        if c["period"] not in (1, 2):
            raise ConfigError("cap.period must be 1 or 2")
        if not (isinstance(c["eta"], (int, float)) and 0 < c["eta"] < 0.5):
            raise ConfigError("cap.eta must lie in (0, 0.5)")
        try:
            ham.Profile(tuple(c["profile"]))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"cap.profile: {exc}") from exc
    elif command == "verify":
        if cfg["verify"]["scale"] not in verify.SIZES:
            raise ConfigError(f"verify.scale must be one of {sorted(verify.SIZES)}")
    return cfg


def surface_spec(cfg: dict) -> at.SurfaceSpec:
    d = dict(cfg["surface"])
    d["seed"] = cfg["seed"]
    return at.SurfaceSpec.from_dict(d)


def _rng(cfg: dict, stream: int) -> np.random.Generator:
    return np.random.default_rng([int(cfg["seed"]), stream])


def _dump(path: Path, data) -> Path:
    path.write_text(json.dumps(data, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(v):
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        return float(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, np.bool_):
        return bool(v)
    raise TypeError(f"not serializable: {type(v)}")


CHART_TAGS = {at.BULK: "bulk", at.HOLE: "hole", at.DISK: "disk"}


def chart_tag(b: at.Batch, i: int) -> str:
    """``bulk/a``, ``collar/a/h`` (r >= 0), ``strip/a/h`` (r < 0) or ``disk/a/h/f``."""
    k = int(b.kind[i])
    a = int(b.sheet[i])
    if k == at.BULK:
        return f"bulk/{a}"
    if k == at.HOLE:
        return f"{'collar' if b.y[i] >= 0 else 'strip'}/{a}/{int(b.hole[i])}"
    return f"disk/{a}/{int(b.hole[i])}/{int(b.fam[i])}"


def _assemble(cfg: dict) -> at.Surface:
    return at.assemble(surface_spec(cfg), Tolerances(**cfg["tolerances"]))


# -- commands -------------------------------------------------------------------

def cmd_construct(cfg: dict, out: Path) -> int:
    s = _assemble(cfg)
    _dump(out / "assembly_report.json", {"config": cfg, "report": s.report})
    print(f"assembled {s.kind}: {len(s.chart_ids())} charts, euler characteristic {s.report['euler_characteristic']}")
    return 0


def cmd_orbit(cfg: dict, out: Path) -> int:
    s = _assemble(cfg)
    o = cfg["orbit"]
    x, y = o["point"]
    b = at.normalize_batch(s, at.Batch.bulk([float(x) % 1.0], [float(y) % 1.0], o["sheet"]))
    rows = []
    for step in range(o["n"] + 1):
        label = an.classify_batch(s, b)[0]
        rows.append((step, chart_tag(b, 0), b.x[0], b.y[0], label))
        if step < o["n"]:
            b = at.map_batch(s, b)
    figures.write_csv(out / "orbit.csv", ("step", "chart", "x", "y", "label"), rows)
    _dump(out / "orbit.json", {"config": cfg, "steps": o["n"], "start_chart": rows[0][1],
                               "end_chart": rows[-1][1]})
    print(f"orbit of {o['n']} steps written")
    return 0


def _ftle_seeds(cfg: dict, s: at.Surface):
    f = cfg["ftle"]
    if f["mode"] == "sample":
        return at.sample(s, f["samples"], _rng(cfg, 1))
    X, Y = figures.pixel_centers(f["grid"])
    return figures.picture_points(s, 0, X, Y)


def _heat_raster(s: at.Surface, b: at.Batch, vals: np.ndarray, size: int) -> np.ndarray:
    """Per-pixel mean of ``vals`` at the picture positions of ``b``; empty pixels are NaN."""
    X, Y = figures.picture_position(s, b)
    ok = np.isfinite(X) & (b.sheet == 0)
    col = np.minimum((X[ok] * size).astype(int), size - 1)
    row = np.minimum(((1.0 - Y[ok]) * size).astype(int), size - 1)
    total = np.zeros((size, size))
    count = np.zeros((size, size))
    np.add.at(total, (row, col), vals[ok])
    np.add.at(count, (row, col), 1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(count > 0, total / count, np.nan)


def cmd_ftle(cfg: dict, out: Path) -> int:
    s = _assemble(cfg)
    f = cfg["ftle"]
    b = _ftle_seeds(cfg, s)
    vals, counts = an.ftle_batch(s, b, f["n"], f["threads"])
    X, Y = figures.picture_position(s, b)
    labels = an.classify_batch(s, b)
    rows = [(X[i], Y[i], chart_tag(b, i), f["n"], vals[i]) for i in range(len(b))]
    figures.write_csv(out / "ftle.csv", ("seed_x", "seed_y", "chart", "n", "ftle"), rows)
    # heat map: 2 ftle / lambda - 1, so cap values are blue and the chaotic sea red
    raster = _heat_raster(s, b, vals, f["grid"])
    figures.write_ppm(out / "ftle.ppm", figures.colorize(2.0 * raster / s.lam - 1.0, 1.0))
    stoch = vals[labels == an.STOCHASTIC]
    summary = {
        "config": cfg,
        "seeds": len(b),
        "backend": an.kernels.BACKEND,
        "stochastic_seeds": int(stoch.size),
        "stochastic_median": float(np.median(stoch)) if stoch.size else None,
        "cap_seeds": int(np.sum(labels == an.CAP)),
        "cap_max": float(vals[labels == an.CAP].max()) if np.any(labels == an.CAP) else None,
        "oracle": verify.ftle_oracle(),
        "renormalizations": int(counts.max()) if counts.size else 0,
    }
    _dump(out / "ftle.json", summary)
    print(f"ftle: {len(b)} seeds, stochastic median {summary['stochastic_median']}")
    return 0


def cmd_portrait(cfg: dict, out: Path) -> int:
    s = _assemble(cfg)
    p = cfg["portrait"]
    rng = _rng(cfg, 2)
    b = at.sample(s, 1, rng, "stochastic")
    xs, ys = [], []
    for _ in range(p["chaotic_n"]):
        b = at.map_batch(s, b)
        if b.sheet[0] == 0:
            X, Y = figures.picture_position(s, b)
            xs.append(X[0])
            ys.append(Y[0])
    chaotic = (np.array(xs), np.array(ys))
    circles = []
    rows = [(0, "chaotic", x, y) for x, y in zip(*chaotic)]
    if s.cap is not None and p["cap_orbits"] > 0:
        seeds = at.sample(s, 4 * p["cap_orbits"], rng, "cap")
        seeds = seeds.take(np.flatnonzero((seeds.sheet == 0) & ~an.near_separatrix(s, seeds, 0.02))[:p["cap_orbits"]])
        cur = seeds
        track_x, track_y = [], []
        for _ in range(p["cap_n"]):
            X, Y = figures.picture_position(s, cur)
            track_x.append(X)
            track_y.append(Y)
            cur = at.map_batch(s, cur)
        TX, TY = np.array(track_x).T, np.array(track_y).T
        for j in range(len(seeds)):
            circles.append((TX[j], TY[j]))
            rows += [(j + 1, "cap", x, y) for x, y in zip(TX[j], TY[j])]
    (out / "portrait.svg").write_text(figures.portrait_svg(s, chaotic, circles))
    figures.write_csv(out / "portrait.csv", ("orbit", "kind", "x", "y"), rows)
    mask = figures.island_mask(s, p["mask_size"])
    figures.write_ppm(out / "island_mask.ppm", mask)
    frac = figures.mask_stochastic_fraction(mask)
    _dump(out / "portrait.json", {"config": cfg, "mask_stochastic_fraction": frac,
                                  "weight_stochastic_fraction": s.report["area_estimates"]["stochastic_fraction"],
                                  "cap_area": figures.cap_area(s), "orbits": len(circles) + 1})
    print(f"portrait written; mask stochastic fraction {frac:.6f}")
    return 0


def cap_system(c: dict) -> ham.HamiltonianSystem:
    """Standalone caps: constant rate, ``k`` saddle pairs on a period-``period`` strip."""
    return ham.HamiltonianSystem("collar", ham.Profile(tuple(c["profile"])), c["period"],
                                 c["k"] / c["period"])


def cmd_cap(cfg: dict, out: Path) -> int:
    c = cfg["cap"]
    cap = surgery.build_cap(cap_system(c), c["eta"], c["k"], grid_size=c["grid_size"])
    entries = []
    rows = []
    for i, e in enumerate(cap.census):
        kind = "saddle" if e["boundary"] else "elliptic"
        h1, h2 = e["hessian_eigenvalues"]
        entries.append({"cap_id": i, "chart": e["chart"], "point": e["point"], "class": e["class"],
                        "type": kind, "energy": e["energy"], "hessian_eigenvalues": [h1, h2]})
        rows.append((i, e["point"][0], e["point"][1], h1, h2, e["class"]))
    figures.write_csv(out / "census.csv", ("cap_id", "x", "y", "hess1", "hess2", "class"), rows)
    _dump(out / "census.json", {"config": cfg, "k": c["k"], "area": cap.area,
                                "elliptic": sum(e["type"] == "elliptic" for e in entries),
                                "entries": entries})
    (out / "cap_model.json").write_text(cap.to_json() + "\n")
    print(f"cap k={c['k']}: {sum(e['type'] == 'elliptic' for e in entries)} elliptic points")
    return 0


def cmd_verify(cfg: dict, out: Path) -> int:
    checks = verify.run_suite(surface_spec(cfg), cfg["verify"]["scale"], cfg["seed"])
    for c in checks:
        print(c.line())
    ok = all(c.passed for c in checks)
    _dump(out / "verify_report.json", {"config": cfg, "passed": ok, "checks": [c.as_dict() for c in checks]})
    return 0 if ok else 1


HANDLERS = {"construct": cmd_construct, "orbit": cmd_orbit, "ftle": cmd_ftle,
            "portrait": cmd_portrait, "cap": cmd_cap, "verify": cmd_verify}


# -- argument handling ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="collarcap", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", type=Path, help="JSON config merged over the defaults")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out", type=Path)
    ap.add_argument("--surface", dest="surface_kind", choices=at.SURFACE_KINDS)
    ap.add_argument("--epsilon", type=float)
    ap.add_argument("--eta", type=float)
    ap.add_argument("--genus", type=int)
    ap.add_argument("--profile", type=float, nargs="+")
    ap.add_argument("--weight-samples", type=int)
    ap.add_argument("--n", type=int, help="iterate count (orbit, ftle)")
    ap.add_argument("--samples", type=int, help="ftle sample count")
    ap.add_argument("--mode", choices=("sample", "grid"), help="ftle seeding")
    ap.add_argument("--grid", type=int, help="raster size (ftle)")
    ap.add_argument("--threads", type=int)
    ap.add_argument("--point", type=float, nargs=2, help="orbit seed in the bulk chart")
    ap.add_argument("--k", type=int, help="cap saddle pairs")
    ap.add_argument("--scale", choices=tuple(verify.SIZES), help="verify problem sizes")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def _overrides(args: argparse.Namespace) -> dict:
    o: dict = {}

    def put(section, key, value):
        if value is not None:
            o.setdefault(section, {})[key] = value

    if args.seed is not None:
        o["seed"] = args.seed
    if args.out is not None:
        o["out"] = str(args.out)
    put("surface", "kind", args.surface_kind)
    put("surface", "epsilon", args.epsilon)
    put("surface", "genus", args.genus)
    put("surface", "weight_samples", args.weight_samples)
    if args.command == "cap":
        put("cap", "eta", args.eta)
        put("cap", "profile", args.profile)
    else:
        put("surface", "eta", args.eta)
        put("surface", "profile", args.profile)
    if args.command in ("orbit", "ftle"):
        put(args.command, "n", args.n)
    put("orbit", "point", list(args.point) if args.point else None)
    put("ftle", "samples", args.samples)
    put("ftle", "mode", args.mode)
    put("ftle", "grid", args.grid)
    put("ftle", "threads", args.threads)
    put("cap", "k", args.k)
    put("verify", "scale", args.scale)
    return o


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if args.config is not None:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        cfg = _merge(cfg, data)
    cfg = _merge(cfg, _overrides(args))
    return validate(cfg, args.command)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(json.dumps({"error": "invalid_config", "command": args.command, "message": str(exc)}))
        return 2
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    try:
        return HANDLERS[args.command](cfg, out)
    except (CollarCapError, FloatingPointError, ArithmeticError) as exc:
        print(json.dumps({"error": "numeric_failure", "command": args.command,
                          "type": type(exc).__name__, "message": str(exc)}))
        return 1


if __name__ == "__main__":
    sys.exit(main())
