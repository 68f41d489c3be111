import os
import sys
from collections import defaultdict

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile(
    "default", deadline=None, max_examples=100, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

CRITERIA = 11
_outcomes: dict = defaultdict(list)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number n")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        _outcomes[marker.args[0]].append((item.name, rep.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, CRITERIA + 1):
        runs = _outcomes.get(n)
        if not runs:
            terminalreporter.write_line(f"criterion {n:2d}: NOT RUN")
            continue
        failed = [name for name, out in runs if out != "passed"]
        status = "FAIL" if failed else "PASS"
        detail = f"failed: {', '.join(failed)}" if failed else f"{len(runs)} check(s)"
        terminalreporter.write_line(f"criterion {n:2d}: {status}  ({detail})")
