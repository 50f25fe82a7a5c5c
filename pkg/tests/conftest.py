import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

_CRITERIA = {}


@pytest.fixture
def criterion():
    """Record a pass/fail line for an acceptance criterion, printed in the session summary."""

    def record(number, ok, detail):
        _CRITERIA[number] = (bool(ok), detail)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        ok, detail = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {str(number):>4}: {'PASS' if ok else 'FAIL'}  {detail}")


def within_se(mean, ref, se, k=3.0, floor=1e-12):
    """Componentwise |mean - ref| <= k SE + floor; returns (ok, worst ratio)."""
    dev = np.abs(np.asarray(mean) - np.asarray(ref))
    bound = k * np.asarray(se) + floor
    return bool(np.all(dev <= bound)), float(np.max(dev / bound))
