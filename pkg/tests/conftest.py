import os

os.environ.setdefault("OMP_NUM_THREADS", "1")

from math import pi

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def fine_grid():
    from pkslab.grid import graded_grid
    return graded_grid(2000, 60.0, 0.25)


@pytest.fixture(scope="session")
def zeta3():
    from pkslab.porous import solve_zeta
    return solve_zeta(3)


@pytest.fixture(scope="session")
def constants3(zeta3):
    from pkslab.porous import estimate_Cstar_and_Mc
    return estimate_Cstar_and_Mc(3, zeta=zeta3)


M4PI, M8PI = 4 * pi, 8 * pi


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import OUTCOMES
    except ImportError:
        return
    if OUTCOMES:
        terminalreporter.section("acceptance criteria")
        for o in sorted(OUTCOMES, key=lambda o: o.criterion.number):
            terminalreporter.write_line(o.line())
