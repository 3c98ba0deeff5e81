import os
import sys

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=500, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    import numpy as np
    return np.random.default_rng(12345)


def pytest_sessionfinish(session, exitstatus):
    from prodhawkes import simulate
    if simulate.UNDER_BOUND_RETRIES and exitstatus == 0:
        session.exitstatus = 1


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    from prodhawkes import simulate
    acc = sys.modules.get("test_acceptance")
    if acc is not None and acc.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in acc.RESULTS:
            terminalreporter.write_line(line)
    n = simulate.UNDER_BOUND_RETRIES
    terminalreporter.write_line(
        f"{'PASS' if n == 0 else 'FAIL'}  4c suite-wide thinning under-bound retries: {n}")
