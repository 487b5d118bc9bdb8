import math

import hypothesis
import numpy as np
import pytest

from scopectl.integrator import SimConfig
from scopectl.plant import PlantParams

np.seterr(over="raise", invalid="raise", divide="raise")

hypothesis.settings.register_profile("default", deadline=None, max_examples=60)
hypothesis.settings.register_profile("fast", deadline=None, max_examples=10)
hypothesis.settings.load_profile("default")

THETA_D = (math.radians(60.0), math.radians(50.0))


@pytest.fixture
def plant():
    return PlantParams()


@pytest.fixture
def step_cfg():
    return SimConfig(step_size=1e-3, duration=3.0, theta_desired=THETA_D)


# acceptance reporting: one line per criterion, aggregated over its tests

_CRITERIA: dict[int, list] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (rep.when != "call" and not rep.failed):
        return
    n, title = mark.args
    entry = _CRITERIA.setdefault(n, [title, True, []])
    if rep.failed:
        entry[1] = False
        entry[2].append(item.name)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, ok, failed = _CRITERIA[n]
        line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {title}"
        if failed:
            line += f"  (failed: {', '.join(failed)})"
        terminalreporter.write_line(line)
