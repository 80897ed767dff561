import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from reflexnav.config import ScenarioConfig
from reflexnav.core import RobotState, vec3

settings.register_profile("repo", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")

# criterion number -> (passed, detail), filled by tests/test_acceptance.py
ACCEPTANCE: dict[int, list] = {}


@pytest.fixture
def cfg():
    return ScenarioConfig()


@pytest.fixture
def robot():
    return RobotState(vec3(0.0, 0.0, 0.3), vec3(), 0.0, 0.0)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        results = ACCEPTANCE[k]
        ok = all(r[0] for r in results)
        detail = "; ".join(r[1] for r in results)
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
