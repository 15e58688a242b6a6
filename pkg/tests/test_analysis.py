import math

import numpy as np
import pytest

from collarcap import analysis as an
from collarcap import anosov
from collarcap import atlas as at
from collarcap.errors import ClassificationError


def test_classify_examples(sphere):
    assert an.classify(sphere, at.ChartPoint.bulk(0.3, 0.2)) == an.STOCHASTIC
    for fam in range(len(sphere.cap.families)):
        assert an.classify(sphere, at.ChartPoint.disk(0, fam, 0.0, 0.0)) == an.CAP
    assert an.classify(sphere, at.ChartPoint.collar(0, 0.37, 0.0)) == an.BOUNDARY_LINK
    eps = sphere.epsilon
    assert an.classify(sphere, at.ChartPoint.collar(0, 0.37, 0.5 * eps)) == an.STOCHASTIC


def test_sample_regions_classify(sphere, rng):
    for region, label in (("stochastic", an.STOCHASTIC), ("cap", an.CAP)):
        b = at.sample(sphere, 500, rng, region)
        assert np.all(an.classify_batch(sphere, b) == label)


def test_ftle_bulk_close_to_log_lambda(sphere):
    rec = an.ftle(sphere, at.ChartPoint.bulk(0.123, 0.377), 500)
    assert rec.renorm_count == 500 // 50 - 1  # the final norm is not a renormalization
    assert abs(rec.ftle - anosov.LAMBDA) < 0.05


def test_ftle_telescopes(sphere):
    """n * ftle_n is additive along an orbit up to the angle of the transported vector."""
    p = at.ChartPoint.bulk(0.21, 0.34)
    a = an.ftle(sphere, p, 400).ftle * 400
    b = an.ftle(sphere, p, 200).ftle * 200
    q = at.Batch.of([at.normalize(sphere, p)])
    q = at.map_batch(sphere, q, 200)
    c = an.ftle_batch(sphere, q, 200, threads=1)[0][0] * 200
    # the norm is submultiplicative, and nearly multiplicative once aligned
    assert a <= b + c + 1e-6
    assert a > b + c - 5.0


def test_ftle_cap_small(sphere, rng):
    b = at.sample(sphere, 20, rng, "cap")
    b = b.take(np.flatnonzero(~an.near_separatrix(sphere, b)))
    vals, _ = an.ftle_batch(sphere, b, 2000)
    assert np.max(vals) < 0.01


def test_ftle_rejects_bad_n(sphere):
    with pytest.raises(ValueError):
        an.ftle_batch(sphere, at.Batch.bulk([0.1], [0.2]), 0)


def test_threads_do_not_change_results(sphere, rng):
    b = at.sample(sphere, 40, rng, "stochastic")
    one = an.ftle_batch(sphere, b, 300, threads=1)[0]
    four = an.ftle_batch(sphere, b, 300, threads=4)[0]
    assert np.array_equal(one, four)


def test_entropy_sphere(sphere):
    h, se = an.entropy_estimate(sphere, 200, 300, np.random.default_rng(3))
    frac = sphere.report["area_estimates"]["stochastic_fraction"]
    assert h >= 0.0 and se > 0.0
    assert abs(h - frac * anosov.LAMBDA) < 0.1 * frac * anosov.LAMBDA


def test_rotation_number_is_inverse_period(sphere):
    cap = sphere.cap
    for fam in range(len(cap.families)):
        for x in (0.0006, 0.001, 0.0014):
            p = at.normalize(sphere, at.ChartPoint.disk(0, fam, x, 0.0))
            E = an.cap_strip_energy(sphere, at.Batch.of([p]))[0]
            rho = an.rotation_number(sphere, p, 2000)
            assert abs(rho - (1.0 / cap.period(fam, E)) % 1.0) < 1e-9


def test_rotation_number_constant_on_a_circle(sphere):
    cap = sphere.cap
    p = at.normalize(sphere, at.ChartPoint.disk(0, 0, 0.001, 0.0))
    q = at.map_batch(sphere, at.Batch.of([p]), 37)
    q = at.ChartPoint(*(getattr(q, f)[0] for f in ("sheet", "kind", "hole", "fam", "x", "y")))
    assert abs(an.rotation_number(sphere, p, 500) - an.rotation_number(sphere, q, 500)) < 1e-9


def test_rotation_number_rejects_stochastic(sphere):
    with pytest.raises(ClassificationError):
        an.rotation_number(sphere, at.ChartPoint.bulk(0.3, 0.2), 10)


def test_level_drift_at_center(sphere):
    for fam in range(len(sphere.cap.families)):
        assert an.level_drift(sphere, at.ChartPoint.disk(0, fam, 0.0, 0.0), 200) < 1e-15


def test_level_drift_rejects_stochastic(sphere):
    with pytest.raises(ClassificationError):
        an.level_drift(sphere, at.ChartPoint.bulk(0.3, 0.2), 5)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_census_classes(caps, k):
    found = an.critical_census(caps[k])
    extrema = [c for c in found if c["class"] in ("min", "max")]
    assert len(extrema) == k + 1
    assert all(c["class"] in ("min", "max", "saddle") for c in found)
    for c in extrema:
        assert all(v != 0 for v in c["hessian_eigenvalues"])
        assert np.sign(c["hessian_eigenvalues"][0]) == np.sign(c["hessian_eigenvalues"][1])
