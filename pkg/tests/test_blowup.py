import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from collarcap import anosov, blowup, geometry
from collarcap.errors import RangeError, SingularityError

FRAME = anosov.eigen_data().rotation


def test_project_period_two():
    chart = blowup.BlowupChart((0.0, 0.0), np.eye(2), math.pi / 2, 2)
    assert np.allclose(blowup.project(chart, (0.5, math.pi / 2)), (0.0, 1.0), atol=1e-15)


@given(st.floats(0, 2, exclude_max=True))
def test_exceptional_circle_collapses(theta):
    chart = blowup.BlowupChart((0.3, 0.7), FRAME, 0.01, 2)
    assert blowup.project(chart, (theta, 0.0)) == (0.3, 0.7)


def test_project_jacobian_unit_det():
    chart = blowup.BlowupChart((0.0, 0.0), FRAME, 1.0, 2)
    J = geometry.jacobian_fd(lambda p: blowup.project(chart, p), (0.25, 0.2))
    assert abs(abs(np.linalg.det(J)) - 1.0) < 1e-7
    assert np.allclose(J, blowup.project_jacobian(chart, 0.25, 0.2), atol=1e-8)


def test_lift_value():
    chart = blowup.BlowupChart((0.0, 0.0), np.eye(2), math.pi / 2, 2)
    q = blowup.lift(chart, (1.0, 0.0))
    assert q.theta == 0.0 and math.isclose(q.r, math.pi / 2)


def test_lift_center_is_singular():
    chart = blowup.BlowupChart((0.5, 0.5), FRAME, 0.01, 2)
    with pytest.raises(SingularityError):
        blowup.lift(chart, (0.5, 0.5))


def test_range_checks():
    chart = blowup.BlowupChart((0.0, 0.0), np.eye(2), 0.01, 2)
    with pytest.raises(RangeError):
        blowup.project(chart, (0.1, 0.02))
    with pytest.raises(RangeError):
        blowup.project(chart, (0.1, -0.001))
    with pytest.raises(ValueError):
        blowup.BlowupChart((0.0, 0.0), np.array([[1.0, 1.0], [0.0, 1.0]]), 0.01, 2)


@pytest.mark.parametrize("period", [1, 2])
def test_lift_project_round_trip(period, rng):
    chart = blowup.BlowupChart((0.5, 0.0), FRAME, 0.01, period)
    worst = 0.0
    for th, r in zip(rng.random(1000) * period, 0.01 * rng.random(1000) + 1e-6):
        q = blowup.lift(chart, blowup.project(chart, (th, r)))
        dth = (q.theta - th + period / 2) % period - period / 2
        worst = max(worst, abs(dth), abs(q.r - r))
    assert worst < 1e-10


@given(st.floats(0.0, 2 * math.pi), st.floats(0.001, 0.05), st.floats(0, 1))
def test_lift_radius_invariant_under_rotation(phi, d, a):
    chart = blowup.BlowupChart((0.0, 0.0), np.eye(2), 1.0, 2)
    v1 = (d * math.cos(a), d * math.sin(a))
    c, s = math.cos(phi), math.sin(phi)
    v2 = (c * v1[0] - s * v1[1], s * v1[0] + c * v1[1])
    assert math.isclose(blowup.lift(chart, v1).r, blowup.lift(chart, v2).r, rel_tol=1e-12)


def test_blow_down():
    delta = 0.01
    for th in (0.0, 0.3, 0.77):
        x, y = blowup.blow_down((th, delta), (0.0, 0.0))
        assert math.isclose(math.hypot(x, y), math.sqrt(delta / math.pi), rel_tol=1e-14)
    assert blowup.blow_down((0.4, 0.0), (0.2, 0.1)) == (0.2, 0.1)
    J = geometry.jacobian_fd(lambda p: blowup.blow_down(p), (0.3, delta / 2), 1e-6)
    assert abs(abs(np.linalg.det(J)) - 1.0) < 1e-7


@given(st.floats(0, 1, exclude_max=True), st.floats(1e-4, 0.1))
def test_blow_up_inverts_blow_down(th, r):
    q = blowup.blow_up(blowup.blow_down((th, r)))
    assert abs((q.theta - th + 0.5) % 1 - 0.5) < 1e-12 and math.isclose(q.r, r, rel_tol=1e-12)
