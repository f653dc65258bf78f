import math

import numpy as np
import pytest
from hypothesis import settings

from scenery_homog.covariance import CovarianceModel

settings.register_profile("ci", max_examples=30, deadline=None)
settings.load_profile("ci")


@pytest.fixture(scope="session")
def gauss():
    return CovarianceModel("gaussian_separable", 1.0, 1.0, 1.0, 3)


@pytest.fixture(scope="session")
def tapered():
    return CovarianceModel("tapered_gaussian", 1.0, 1.0, 1.0, 3, taper_radius=3.0)


SQRT_HALF_PI = math.sqrt(math.pi / 2)
SQRT_2PI = math.sqrt(2 * math.pi)


def within(est, se, target, k=3.0):
    return abs(est - target) <= k * se


def zeros(d=3):
    return np.zeros(d)


# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def record(n, passed, detail):
    ACCEPTANCE[n] = (bool(passed), detail)
    print(f"criterion {n:2d}: {'PASS' if passed else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
