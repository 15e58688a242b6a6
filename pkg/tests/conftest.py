import numpy as np
import pytest

from collarcap import atlas as at

# smaller Monte-Carlo area estimate than the production default keeps assembly fast
WEIGHT_SAMPLES = 200_000


def build(kind, **kw):
    return at.assemble(at.SurfaceSpec(kind=kind, weight_samples=WEIGHT_SAMPLES, **kw))


@pytest.fixture(scope="session")
def sphere():
    return build("sphere")


@pytest.fixture(scope="session")
def disk():
    return build("disk")


@pytest.fixture(scope="session")
def torus():
    return build("torus")


@pytest.fixture(scope="session")
def klein():
    return build("klein_cover_torus")


@pytest.fixture(scope="session")
def cap(sphere):
    return sphere.cap


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def caps(cap):
    from collarcap import verify
    return {1: cap, 2: verify.census_cap(2), 3: verify.census_cap(3)}


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
