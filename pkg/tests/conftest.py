import pytest

from wmdsim.circuit import table1_preset
from wmdsim.pfm import pattern_from_duty
from wmdsim.transient import run_to_steady_state, table1_motor_fit

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def net():
    return table1_preset()


@pytest.fixture(scope="session")
def motor_fit():
    return table1_motor_fit()


@pytest.fixture(scope="session")
def rated_report(net, motor_fit):
    return run_to_steady_state(net, motor_fit.rated, pattern_from_duty(1.0))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
