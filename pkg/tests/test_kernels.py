import os
import subprocess
import sys

import numpy as np
import pytest

from collarcap import _kernels_py, anosov, kernels
from collarcap import atlas as at

try:
    from collarcap import _kernels as compiled
except ImportError:  # pragma: no cover
    compiled = None


def _args(s, b, n):
    d = s.direction[b.sheet].astype(float)
    return (b.kind, b.hole, b.x, b.y, d, n, s.epsilon, anosov.LAMBDA, s.frame)


def test_fallback_iterate_matches_map_batch(sphere, rng):
    b = at.sample(sphere, 300, rng, "stochastic")
    out = _kernels_py.iterate(*_args(sphere, b, 7))
    ref = at.map_batch(sphere, b, 7)
    x, y = np.asarray(out[2]), np.asarray(out[3])
    assert np.array_equal(np.asarray(out[0]), ref.kind)
    assert np.max(np.abs(x - ref.x)) < 1e-9 and np.max(np.abs(y - ref.y)) < 1e-9


@pytest.mark.skipif(compiled is None, reason="compiled kernels not built")
@pytest.mark.parametrize("n", [1, 2, 5])
def test_compiled_matches_fallback(sphere, rng, n):
    b = at.sample(sphere, 500, rng, "stochastic")
    # rounding differences in libm are stretched by the expansion rate
    tol = 1e-14 * np.exp(anosov.LAMBDA * n)
    a = _kernels_py.iterate(*_args(sphere, b, n))
    c = compiled.iterate(*_args(sphere, b, n))
    assert np.array_equal(np.asarray(a[0]), np.asarray(c[0]))
    for i in (2, 3):
        assert np.max(np.abs(np.asarray(a[i]) - np.asarray(c[i]))) < tol
    fa = _kernels_py.ftle(*_args(sphere, b, n))[0]
    fc = compiled.ftle(*_args(sphere, b, n))[0]
    assert np.max(np.abs(np.asarray(fa) - np.asarray(fc))) < tol


@pytest.mark.skipif(compiled is None, reason="compiled kernels not built")
def test_compiled_is_selected_by_default():
    if os.environ.get("COLLARCAP_KERNEL", "").lower() == "python":
        pytest.skip("fallback forced by the environment")
    assert kernels.BACKEND == "cython"


def test_environment_forces_fallback():
    env = dict(os.environ, COLLARCAP_KERNEL="python")
    out = subprocess.run([sys.executable, "-c", "from collarcap import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
