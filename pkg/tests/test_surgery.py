import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from collarcap import hamiltonian as ham
from collarcap import surgery, verify
from collarcap.errors import DomainError, RangeError, StructureError


def test_collar_strip_sigma_positions(cap):
    strip = cap.strip
    (lo, hi), = strip.sigma_out
    assert lo < 0.0 < hi and abs(0.5 * (lo + hi)) < 1e-9
    (lo, hi), = strip.sigma_in
    assert lo < 0.5 < hi and abs(0.5 * (lo + hi) - 0.5) < 1e-9


def test_period_two_moser_strip_has_four_saddles():
    sys = ham.HamiltonianSystem("moser", ham.Profile((1.0, 0.2)), 2, 1.0)
    strip = surgery.build_strip(sys, 0.05, 2)
    assert np.allclose([strip.saddle_theta(j) for j in range(4)], [0.0, 0.5, 1.0, 1.5])


@pytest.mark.parametrize("k", [1, 2, 3])
def test_boundary_piece_count(caps, k):
    assert caps[k].strip.boundary_pieces == 4 * k + 1


def test_wrong_saddle_count_is_structural():
    with pytest.raises(StructureError):
        surgery.build_strip(ham.HamiltonianSystem("collar", ham.Profile(), 1), 0.05, 2)


def _sigma_out_point(strip, energy, i=0):
    s = strip.invariant_of_energy(energy)
    return float(strip.sigma_theta(2 * i, s)), -strip.eta


def test_glue_on_sigma_out(cap):
    strip = cap.strip
    for E in np.linspace(-0.9, 0.9, 7) * strip.level:
        p = _sigma_out_point(strip, E)
        q = surgery.glue_map(strip, 0, p)
        th_in = float(strip.sigma_theta(1, strip.invariant_of_energy(E)))
        ref = ham.flow_arrays(strip.sys, th_in, -strip.eta, 1.0)
        assert abs(q[0] - float(ref[0])) < 1e-12 and abs(q[1] - float(ref[1])) < 1e-14
        assert abs(strip.energy(*q) - E) < 1e-10 * strip.level


def test_glue_flow_equivariance(cap):
    c = verify.check_glue(cap, 100, 50, np.random.default_rng(3))
    assert c.detail["equivariance"] < 1e-9
    assert c.detail["representatives"] < 1e-8


def test_glue_rejects_points_outside_out_strip(cap):
    strip = cap.strip
    # a point on Sigma_in has a full transit ahead of it
    th = float(strip.sigma_theta(1, strip.invariant_of_energy(0.3 * strip.level)))
    with pytest.raises(DomainError):
        surgery.glue_map(strip, 0, (th, -strip.eta))
    with pytest.raises(RangeError):
        surgery.glue_map(strip, 0, (0.25, -0.5 * cap.eta))


def test_glue_inverse_round_trip(cap, rng):
    from collarcap.verify import _exit_points
    th, r = _exit_points(cap, 200, rng)
    worst = 0.0
    for a, b in zip(th, r):
        q = surgery.glue_map(cap.strip, 0, (float(a), float(b)))
        back = surgery.glue_inverse(cap.strip, q)
        worst = max(worst, abs((back[0] - a + 0.5) % 1 - 0.5), abs(back[1] - b))
    assert worst < 1e-10


def test_quotient_normalize(cap, rng):
    strip = cap.strip
    # |H| = eta^3 / 2 at theta = 1/4 lies in neither flow strip
    s = strip.invariant_of_energy(0.5 * strip.level)
    p = (0.25, math.pi * s / math.sin(2 * math.pi * 0.25))
    assert surgery.quotient_normalize(strip, p) == pytest.approx(p, abs=1e-15)
    from collarcap.verify import _exit_points
    th, r = _exit_points(cap, 100, rng)
    alt_t, alt_r = surgery.alternate_arrays(strip, th, r)
    n_t, n_r = surgery.normalize_arrays(strip, alt_t, alt_r)
    assert np.max(np.abs((n_t - th + 0.5) % 1 - 0.5)) < 1e-10
    assert np.max(np.abs(n_r - r)) < 1e-10


def test_normalize_idempotent(cap, rng):
    strip = cap.strip
    th = rng.random(1000)
    r = -cap.eta * rng.random(1000)
    keep = np.abs(strip.energy(th, r)) <= strip.level
    a = surgery.normalize_arrays(strip, th[keep], r[keep])
    b = surgery.normalize_arrays(strip, *a)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_shear_fixture_section_data():
    c = 2.5
    flow, start, crossing = verify.shear_fixture(c)
    E = np.linspace(-1.0, 1.0, 9)
    sd = surgery.section_data(flow, start, crossing, E)
    assert np.max(np.abs(sd.periods - 1 / c)) < 1e-9
    assert np.max(np.abs(sd.actions - E / c)) < 1e-9
    assert abs(sd.action(0.0)) < 1e-12
    assert np.all(sd.periods > 0) and np.all(np.diff(sd.actions) > 0)


def test_shear_fixture_transform_is_a_translation():
    """For H = c r the action is r and the angle is theta up to a constant."""
    c = 1.7
    flow, start, crossing = verify.shear_fixture(c)
    sd = surgery.section_data(flow, start, crossing, np.linspace(-1, 1, 9))
    energy = lambda p: c * p[1]
    offsets = []
    for th, r in [(0.1, 0.2), (0.35, -0.4), (0.8, 0.05)]:
        ang, A = surgery.action_angle(sd, (th, r), flow, crossing, energy)
        assert abs(A - r) < 1e-9
        offsets.append((ang - th) % 1.0)
    assert np.ptp(offsets) < 1e-9


def test_cap_action_angle(cap):
    c = verify.check_action_angle(cap, 3, np.random.default_rng(5), nodes=100)
    assert c.detail["roundtrip"] < 1e-8
    assert c.detail["horizontal_circle"] < 1e-8
    assert c.detail["det"] < 1e-7


def test_action_over_radius_fails_the_det_check(cap):
    """Negative control: the period integrated over the section coordinate r is not an action."""
    c = verify.check_action_negative_control(cap)
    assert c.passed and c.value > 1e-3


@pytest.mark.parametrize("k", [1, 2, 3])
def test_census_counts(caps, k):
    interior = [c for c in caps[k].census if not c["boundary"]]
    assert len(interior) == k + 1
    for c in interior:
        eig = c["hessian_eigenvalues"]
        assert eig[0] * eig[1] > 0
    boundary = [c for c in caps[k].census if c["boundary"]]
    assert all(c["class"] == "saddle" for c in boundary)


def test_centers_are_fixed(caps):
    for k, cap in caps.items():
        for fam in range(len(cap.families)):
            f, x, y = surgery.cap_time_one(cap, surgery.center(cap, fam))
            assert f == fam and math.hypot(x, y) < 1e-12


def test_rotation_at_center_matches_limit_of_periods(cap):
    """Near P_i the disk map rotates by 1/T_i(E) as E approaches the center level."""
    eta3 = cap.eta ** 3
    for fam, F in enumerate(cap.families):
        T_center = float(cap.period(fam, F.center_energy))
        x0 = 1e-4 * math.sqrt(cap.switch_action[fam] / math.pi)
        f, x, y = surgery.cap_time_one(cap, (fam, x0, 0.0))
        turn = (F.orientation * math.atan2(y, x) / (2 * math.pi)) % 1.0
        assert abs(turn - (1.0 / T_center) % 1.0) < 1e-4


def test_level_drift_single_seed(cap):
    fam, x, y = 0, 0.3 * math.sqrt(cap.switch_action[0] / math.pi), 0.0
    e0 = float(surgery.cap_energy(cap, np.array([fam]), np.array([x]), np.array([y]))[0])
    f, xs, ys = np.array([fam]), np.array([x]), np.array([y])
    for _ in range(2000):
        f, xs, ys = surgery.cap_step(cap, f, xs, ys)
    e1 = float(surgery.cap_energy(cap, f, xs, ys)[0])
    assert abs(e1 - e0) < 1e-7 * cap.eta ** 3


def test_cap_json_round_trip(cap):
    again = surgery.CapModel.from_json(cap.to_json())
    assert again.k == cap.k and math.isclose(again.area, cap.area, rel_tol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.3, 0.95), st.floats(0, 1, exclude_max=True), st.integers(0, 1))
def test_disk_strip_round_trip(cap, level, angle, fam):
    A = cap.switch_action[fam] * level
    rad = math.sqrt(A / math.pi)
    x = np.array([rad * math.cos(2 * math.pi * angle)])
    y = np.array([rad * math.sin(2 * math.pi * angle)])
    th, r = cap.disk_to_strip(fam, x, y)
    f2, x2, y2 = cap.strip_to_disk(th, r)
    assert int(f2[0]) == fam
    assert abs(x2[0] - x[0]) < 1e-10 and abs(y2[0] - y[0]) < 1e-10
