import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from collarcap import analysis as an
from collarcap import anosov
from collarcap import atlas as at
from collarcap import verify
from collarcap.errors import SpecError

from conftest import build


@pytest.mark.parametrize("kind,caps,gluings,chi", [
    ("sphere", 4, 0, 2), ("torus", 2, 1, 0), ("disk", 3, 0, 1), ("annulus", 2, 0, 0),
    ("pants", 1, 0, -1), ("klein_cover_torus", 4, 2, 0),
])
def test_assembly_counts(kind, caps, gluings, chi):
    s = build(kind)
    assert len(s.capped_holes()) == caps
    assert len(s.seams()) == gluings
    assert at.euler_characteristic(s) == chi
    assert s.report["caps"] == caps


@pytest.mark.parametrize("g", [2, 3])
def test_genus_g(g):
    s = build("genus_g", genus=g)
    assert at.euler_characteristic(s) == 2 - 2 * g


def test_spec_validation():
    for bad in [dict(kind="klein"), dict(epsilon=0.2), dict(eta=0.7), dict(profile=(1.0,)),
                dict(kind="genus_g", genus=1), dict(weight_samples=10)]:
        with pytest.raises(SpecError):
            at.SurfaceSpec(**bad).validate()


def test_weights_and_report(sphere):
    w = sphere.weights
    assert w["stochastic/0"] == 0.5
    # Monte-Carlo cap area against the quadrature area, at 4 standard errors
    mc = sphere.report["area_estimates"]
    assert abs(mc["cap_area_mc"] - sphere.cap.area) < 4 * mc["cap_area_mc_se"]
    assert sphere.report["spec"]["kind"] == "sphere"


def test_normalize_bulk_quotient(sphere):
    p = at.normalize(sphere, at.ChartPoint.bulk(0.7, 0.6))
    assert p.kind == at.BULK and (p.x, p.y) == pytest.approx((0.3, 0.4), abs=1e-15)


def test_collar_points_stay_collar(sphere):
    eps = sphere.epsilon
    P = anosov.FIXED_POINTS[2]
    d = 0.8 * math.sqrt(2 * eps / math.pi)
    R = sphere.frame
    v = R @ np.array([d, 0.0])
    b = at.normalize_batch(sphere, at.Batch.bulk([P[0] + v[0]], [P[1] + v[1]]))
    assert b.kind[0] == at.HOLE and b.hole[0] == 2
    assert math.isclose(b.y[0], 0.5 * math.pi * d * d, rel_tol=1e-12)


def test_normalize_idempotent(sphere, rng):
    b = at.sample(sphere, 10_000, rng)
    again = at.normalize_batch(sphere, b)
    for f in ("sheet", "kind", "hole", "fam"):
        assert np.array_equal(getattr(b, f), getattr(again, f))
    assert np.array_equal(b.x, again.x) and np.array_equal(b.y, again.y)


def test_collar_to_bulk_distance(sphere):
    eps = sphere.epsilon
    p = at.ChartPoint.collar(1, 0.3, eps / 2)
    q = at.transition(sphere, p, (0, at.BULK, -1, -1))
    P = np.array(anosov.FIXED_POINTS[1])
    d = (np.array([q.x, q.y]) - P + 0.5) % 1.0 - 0.5
    assert math.isclose(np.hypot(*d), math.sqrt(eps / math.pi), rel_tol=1e-12)
    back = at.transition(sphere, q, (0, at.HOLE, 1, -1))
    assert abs((back.x - 0.3 + 0.5) % 1 - 0.5) < 1e-10 and abs(back.y - eps / 2) < 1e-10


def test_transition_differential_unit_det(sphere, rng):
    eps = sphere.epsilon
    worst = 0.0
    for th, r in zip(rng.random(1000), eps * (0.82 + 0.17 * rng.random(1000))):
        def tmap(q):
            b = at.transition(sphere, at.ChartPoint.collar(3, q[0], q[1]), (0, at.BULK, -1, -1))
            return (b.x, b.y)
        from collarcap import geometry
        J = geometry.jacobian_fd(tmap, (th, r), 1e-6)
        worst = max(worst, abs(abs(np.linalg.det(J)) - 1.0))
    assert worst < 1e-7


def test_cocycle(torus, klein, rng):
    for s in (torus, klein):
        assert verify.check_cocycle(s, 300, rng).passed


def test_conjugacy(sphere, rng):
    c = verify.check_conjugacy(sphere, 10_000, rng)
    assert c.value < 1e-10


def test_bulk_tangent_is_the_matrix(sphere):
    ts = at.global_tangent(sphere, at.ChartPoint.bulk(0.11, 0.23))
    assert np.allclose(ts.jacobian, np.array(anosov.MATRIX, dtype=float), atol=1e-12)


def test_center_tangent_on_unit_circle(sphere):
    from collarcap import geometry, surgery
    cap = sphere.cap
    for fam in range(len(cap.families)):
        def tmap(q, _f=fam):
            f2, x, y = surgery.cap_time_one(cap, (_f, q[0], q[1]))
            return (x, y)
        eig = np.linalg.eigvals(geometry.jacobian_fd(tmap, (0.0, 0.0), 1e-7))
        assert np.max(np.abs(np.abs(eig) - 1.0)) < 1e-6
        assert np.max(np.abs(eig.imag)) > 1e-3


def test_cap_invariance(sphere, rng):
    b = at.sample(sphere, 50, rng, "cap")
    b = b.take(np.flatnonzero(~an.near_separatrix(sphere, b)))
    for _ in range(10_000 // 100):
        b = at.map_batch(sphere, b, 100)
        assert np.all(an.classify_batch(sphere, b) == an.CAP)


def test_deck_commutation():
    c = verify.check_deck(2000, np.random.default_rng(0))
    assert c.value < 1e-10 and c.detail["involution"] < 1e-12


def test_inverse_map(sphere, rng):
    b = at.sample(sphere, 2000, rng)
    back = at.map_batch(sphere, at.map_batch(sphere, b), inverse=True)
    x, y = at.express(sphere, back, b, near=True)
    assert np.max(np.hypot(x - b.x, y - b.y)) < 1e-9


@pytest.mark.parametrize("kind", ["sphere", "disk", "torus", "klein_cover_torus"])
def test_fd_det_per_chart(kind):
    s = build(kind)
    c = verify.check_symplectic_charts(s, 1000, np.random.default_rng(7))
    assert c.value < 1e-7, c.detail


def test_det_along_mixed_orbit(sphere):
    c = verify.check_symplectic_orbits(sphere, 300, np.random.default_rng(8))
    assert c.passed, c.detail
    assert c.detail["visits"]["collar"] > 0


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 1, exclude_max=True), st.floats(0, 1, exclude_max=True))
def test_bulk_step_matches_matrix_mod_quotient(x, y):
    s = _SPHERE
    b = at.normalize_batch(s, at.Batch.bulk([x], [y]))
    img = at.map_batch(s, b)
    A = np.array(anosov.MATRIX, dtype=float)
    qx, qy, _ = anosov.quotient_rep_array(np.array([x]), np.array([y]))
    ax, ay = A @ np.array([qx[0], qy[0]])
    ref = at.normalize_batch(s, at.Batch.bulk([ax % 1.0], [ay % 1.0]))
    ex, ey = at.express(s, img, ref, near=True)
    assert math.hypot(ex[0] - ref.x[0], ey[0] - ref.y[0]) < 1e-10


_SPHERE = build("sphere")
