import sys
from pathlib import Path

import pytest

from mapctl import CostParameters, poisson_map, preset
from mapctl.repro import table_system

sys.path.insert(0, str(Path(__file__).parent))

PRESETS = ("t31-pos-lo", "t31-pos-hi", "t31-neg-lo", "t31-neg-hi")
TABLES = ("3.2", "3.3", "3.4", "3.5", "3.6", "3.7", "3.8", "3.9")


@pytest.fixture
def costs():
    return CostParameters(h=1.0, b=5.0)


@pytest.fixture
def mm1():
    return poisson_map(0.8), poisson_map(1.0)


@pytest.fixture(params=PRESETS)
def preset_map(request):
    return preset(request.param)


@pytest.fixture
def pos_lo_system():
    return table_system("3.2")


@pytest.fixture
def erlang2():
    from mapctl import validate_map
    return validate_map([[-2.0, 2.0], [0.0, -2.0]], [[0.0, 0.0], [2.0, 0.0]])



def pytest_terminal_summary(terminalreporter):
    import acceptance_log
    if acceptance_log.LINES:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_log.LINES:
            terminalreporter.write_line(line)
