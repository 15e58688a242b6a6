import math

import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from collarcap import anosov

unit = st.floats(0.0, 1.0, exclude_max=True)


def test_apply_fixed_points():
    assert tuple(anosov.apply((0.0, 0.0))) == (0.0, 0.0)
    assert tuple(anosov.apply((0.5, 0.5))) == (0.5, 0.5)


def test_apply_value():
    # 13*0.1 + 8*0.2 = 2.9, 8*0.1 + 5*0.2 = 1.8
    p = anosov.apply((0.1, 0.2))
    assert np.allclose(tuple(p), (0.9, 0.8), atol=1e-14)


def test_eigen_data():
    ed = anosov.eigen_data()
    assert round(np.linalg.det(ed.matrix)) == 1
    # largest root of t^2 - 18 t + 1
    assert math.isclose(ed.lam, math.log(9 + 4 * math.sqrt(5)), rel_tol=1e-15)
    assert abs(math.exp(ed.lam) * math.exp(-ed.lam) - 1.0) < 1e-14
    R = ed.rotation
    assert np.allclose(R.T @ R, np.eye(2), atol=1e-14)
    assert np.linalg.det(R) > 0
    D = R.T @ ed.matrix @ R
    assert np.allclose(D, np.diag([math.exp(ed.lam), math.exp(-ed.lam)]), atol=1e-12)


def test_involution_and_quotient():
    assert tuple(anosov.involution((0.0, 0.0))) == (0.0, 0.0)
    assert np.allclose(tuple(anosov.involution((0.3, 0.4))), (0.7, 0.6))
    assert np.allclose(tuple(anosov.quotient_rep((0.3, 0.4))), (0.3, 0.4))
    assert np.allclose(tuple(anosov.quotient_rep((0.7, 0.6))), (0.3, 0.4))
    for p in anosov.FIXED_POINTS:
        assert tuple(anosov.quotient_rep(p)) == tuple(p)


@given(unit, unit)
def test_involution_is_an_involution(x, y):
    q = anosov.involution(anosov.involution((x, y)))
    d = (np.array(tuple(q)) - (x, y) + 0.5) % 1.0 - 0.5
    assert np.max(np.abs(d)) < 1e-15


@given(unit, unit)
def test_apply_inverse_round_trip(x, y):
    q = anosov.apply(anosov.apply((x, y)), inverse=True)
    d = (np.array(tuple(q)) - (x, y) + 0.5) % 1.0 - 0.5
    assert np.max(np.abs(d)) < 1e-13


@given(unit, unit)
def test_apply_commutes_with_involution(x, y):
    a = anosov.apply(anosov.involution((x, y)))
    b = anosov.involution(anosov.apply((x, y)))
    d = (np.array(tuple(a)) - tuple(b) + 0.5) % 1.0 - 0.5
    assert np.max(np.abs(d)) < 1e-13


def test_quotient_rep_array_matches_scalar(rng):
    x, y = rng.random(500), rng.random(500)
    qx, qy, flip = anosov.quotient_rep_array(x, y)
    for i in range(500):
        sx, sy, sf = anosov.quotient_rep_flip(x[i], y[i])
        assert (qx[i], qy[i], bool(flip[i])) == (sx, sy, sf)
