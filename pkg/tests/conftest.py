import os
import sys

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_CELLS = {}
ACCEPTANCE_LINES = []

DESK_N = 2000
DESK_REPS = 200


@pytest.fixture(scope="session")
def sim_cell():
    """Desk-scale replicate records for one (scenario, setting) cell, computed once per session."""
    from drselect.simharness import SimConfig, run_grid

    def get(scenario, setting, reps=DESK_REPS, n=DESK_N):
        key = (scenario, setting, reps, n)
        if key not in _CELLS:
            _CELLS[key] = run_grid([scenario], [setting], reps, SimConfig(n=n))
        return _CELLS[key]

    return get


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
