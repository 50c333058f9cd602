import numpy as np
import pytest

from noisectl.targets import GaussianTarget, GmmTarget


@pytest.fixture
def aniso():
    return GaussianTarget([0.0, 0.0], [0.01, 1.0])


@pytest.fixture
def iso2():
    return GaussianTarget([0.0, 0.0], [1.0, 1.0])


@pytest.fixture
def gmm_pm1():
    return GmmTarget([0.5, 0.5], [[-1.0], [1.0]], 1.0)


def bisect_root(fn, lo, hi, iters=200):
    """Plain bisection; used as an independent oracle."""
    flo = fn(lo)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        fm = fn(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def random_spd(rng, d):
    a = rng.standard_normal((d, d))
    return a @ a.T + 0.1 * np.eye(d)


# One summary line per acceptance criterion, printed after the run.
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
