import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from genthompson import Environment, ExpertSet, perturbed_experts  # noqa: E402

_CRITERIA = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        number, title = marker.args
        status = "PASS" if report.outcome == "passed" else "FAIL"
        _CRITERIA.append((number, title, status, report.duration))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, status, duration in sorted(_CRITERIA):
        terminalreporter.write_line(f"[{status}] AC{number:>2} {title} ({duration:.2f} s)")


@pytest.fixture
def small_instance():
    rng = np.random.default_rng(0)
    env = Environment(mu=rng.uniform(0.05, 0.95, (4, 3)))
    experts = perturbed_experts(env, 5, 0.2, np.random.default_rng(1))
    return env, experts


@pytest.fixture
def two_arm_instance():
    env = Environment(mu=np.array([[0.3, 0.7]]))
    experts = ExpertSet.from_environment(env, [np.array([[0.8, 0.4]]), np.array([[0.5, 0.55]])])
    return env, experts
