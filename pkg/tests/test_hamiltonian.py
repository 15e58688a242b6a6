import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from collarcap import anosov, blowup, geometry
from collarcap import hamiltonian as ham
from collarcap.errors import EscapeError, RangeError

LAM = anosov.LAMBDA
COLLAR = ham.HamiltonianSystem("collar", ham.Profile(), 1)


def test_value():
    assert ham.value(COLLAR, (0.37, 0.0)) == 0.0
    assert math.isclose(ham.value(COLLAR, (0.25, 1.0)), LAM / math.pi, rel_tol=1e-15)
    moser = ham.HamiltonianSystem("moser", ham.Profile((2.0,)), 1)
    th, r = 0.13, 0.4
    assert math.isclose(ham.value(moser, (th, r)), 2.0 / math.pi * r * math.sin(2 * math.pi * th), rel_tol=1e-14)


def test_saddles_are_critical():
    for p in [(0.0, 0.0), (0.5, 0.0)]:
        assert ham.gradient(COLLAR, p) == pytest.approx((0.0, 0.0), abs=1e-15)
    moser = ham.HamiltonianSystem("moser", ham.Profile((1.0, 0.3)), 2, 1.0)
    assert len(moser.saddles()) == 4
    for i in range(4):
        assert ham.gradient(moser, (i / 2, 0.0)) == pytest.approx((0.0, 0.0), abs=1e-15)


def test_gradient_matches_finite_differences():
    sys = ham.HamiltonianSystem("moser", ham.Profile((1.0, 0.5, -0.2)), 2, 1.0)
    p = (0.31, 0.12)
    h = 1e-6
    fd = ((ham.value(sys, (p[0] + h, p[1])) - ham.value(sys, (p[0] - h, p[1]))) / (2 * h),
          (ham.value(sys, (p[0], p[1] + h)) - ham.value(sys, (p[0], p[1] - h))) / (2 * h))
    assert ham.gradient(sys, p) == pytest.approx(fd, rel=1e-7)


def test_equilibria_are_fixed():
    for t in (-3.0, 0.5, 7.0):
        q = ham.flow(COLLAR, (0.0, 0.0), t)
        assert (q.theta, q.r) == (0.0, 0.0)
    # sin(pi) is not exactly zero in floating point, so Q' moves by rounding only
    q = ham.time_one(COLLAR, (0.5, 0.0))
    assert abs(q.theta - 0.5) < 1e-14 and q.r == 0.0


def test_invariant_axis_expands():
    # theta = 0 is invariant and r grows like exp(2 lambda t) there
    r0 = 1e-3
    q = ham.flow(COLLAR, (0.0, r0), 1.0)
    assert q.theta == 0.0
    assert math.isclose(q.r, math.exp(2 * LAM) * r0, rel_tol=1e-13)


def test_energy_conservation(rng):
    th = rng.random(1000)
    r = 0.02 * (2 * rng.random(1000) - 1)
    e0 = COLLAR.energy_of_invariant(COLLAR.invariant(th, r))
    th1, r1 = ham.flow_arrays(COLLAR, th, r, 1.0)
    e1 = COLLAR.energy_of_invariant(COLLAR.invariant(th1, r1))
    assert np.max(np.abs(e1 - e0)) < 1e-11


def test_time_one_conjugate_to_linear_map(rng):
    """project o time_one = L o project with L = R diag(e^lam, e^-lam) R^T."""
    R = anosov.eigen_data().rotation
    chart = blowup.BlowupChart((0.0, 0.0), R, 1.0, 1)
    L = R @ np.diag([math.exp(LAM), math.exp(-LAM)]) @ R.T
    worst = 0.0
    for th, r in zip(rng.random(1000), 1e-6 + 1e-4 * rng.random(1000)):
        img = ham.time_one(COLLAR, (th, r))
        left = np.array(blowup.project(chart, img, check=False))
        right = L @ np.array(blowup.project(chart, (th, r), check=False))
        worst = max(worst, float(np.max(np.abs(left - right))))
    assert worst < 1e-10


def test_moser_constant_profile_agrees_with_collar(rng):
    moser = ham.HamiltonianSystem("moser", ham.Profile(), 1)
    for th, r in zip(rng.random(200), 0.01 * (2 * rng.random(200) - 1)):
        a = ham.time_one(COLLAR, (th, r))
        b = ham.time_one(moser, (th, r))
        assert abs(a.theta - b.theta) < 1e-12 and abs(a.r - b.r) < 1e-12


def test_moser_map():
    assert ham.moser_map(ham.Profile((1.0, 0.4)), (0.0, 0.0)) == (0.0, 0.0)
    x, y = ham.moser_map(ham.Profile(), (0.3, -0.2))
    assert math.isclose(x, math.exp(LAM) * 0.3) and math.isclose(y, math.exp(-LAM) * -0.2)
    with pytest.raises(RangeError):
        ham.moser_map(ham.Profile((1.0,), 0.1), (1.0, 1.0))


@given(st.floats(-0.5, 0.5), st.floats(-0.5, 0.5))
def test_moser_map_preserves_product(x, y):
    u, v = ham.moser_map(ham.Profile((1.0, 0.7, -0.3)), (x, y))
    assert abs(u * v - x * y) < 1e-14


@settings(max_examples=60)
@given(st.floats(0, 1, exclude_max=True), st.floats(-0.02, 0.02), st.floats(-1.0, 1.0))
def test_flow_jacobian_unit_det(th, r, t):
    J = ham.flow_jacobian(COLLAR, th, r, t)
    assert abs(abs(np.linalg.det(J)) - 1.0) < 1e-10


@settings(max_examples=30)
@given(st.floats(0.05, 0.45), st.floats(0.001, 0.02))
def test_flow_jacobian_matches_fd(th, r):
    fd = geometry.jacobian_fd(lambda p: ham.flow_arrays(COLLAR, p[0], p[1], 0.5), (th, r), 1e-7)
    assert np.allclose(ham.flow_jacobian(COLLAR, th, r, 0.5), fd, rtol=1e-5, atol=1e-6)


def test_closed_form_exit_time_agrees_with_bisection():
    th, r = 0.3, 0.001
    te = ham.exit_time(COLLAR, th, r, 0.01)
    g = lambda t: float(ham.flow_arrays(COLLAR, th, r, t)[1]) - 0.01
    tb = geometry.bisect_crossing(g, 0.0, te + 1.0, tol=1e-14)
    assert abs(te - tb) < 1e-10


def test_band_escape_reports_exit():
    with pytest.raises(EscapeError) as info:
        ham.flow(COLLAR, (0.1, 0.001), 5.0, band=(-0.01, 0.01))
    assert 0 < info.value.exit_time < 5.0
    assert math.isclose(info.value.exit_point.r, 0.01, rel_tol=1e-9)


def test_implicit_midpoint_matches_closed_form():
    sys = ham.HamiltonianSystem("collar", ham.Profile((1.0,)), 1)
    q = ham.integrate(sys, (0.2, 0.01), 0.5)
    th, r = ham.flow_arrays(sys, 0.2, 0.01, 0.5)
    assert abs(q.theta - float(th)) < 1e-6 and abs(q.r - float(r)) < 1e-6


def test_system_validation():
    with pytest.raises(ValueError):
        ham.HamiltonianSystem("collar", ham.Profile((1.0, 0.2)), 1)
    with pytest.raises(ValueError):
        ham.Profile((-1.0,))
    with pytest.raises(ValueError):
        ham.HamiltonianSystem("collar", ham.Profile(), 3)


def test_profile_json_round_trip():
    p = ham.Profile((1.0, 0.25, -0.5), 0.3)
    assert ham.Profile.from_json(p.to_json()) == p
