import numpy as np
import pytest

PI_61 = np.array([0.2, 0.8, 0.0, 0.0])
T_61 = np.array([[-2.0, 0.0, 2.0, 0.0],
                 [5.0, -8.0, 0.0, 3.0],
                 [0.0, 0.0, -1.0, 0.5],
                 [0.0, 0.0, 0.0, -4.0]])
PI_62 = np.array([0.5, 0.3, 0.2])
S_62 = np.array([[-1.0, 1.0, 0.0],
                 [0.0, -2.0, 1.0],
                 [0.0, 0.0, -5.0]])
PI1_64 = np.array([1.0, 0.0, 0.0])
T1_64 = np.array([[-0.5, 0.2, 0.0],
                  [0.0, -1.0, 0.5],
                  [0.0, 0.0, -2.0]])
PI2_64 = np.array([0.5, 0.5])
T2_64 = np.diag([-0.1, -1.0])


@pytest.fixture
def rng():
    return np.random.default_rng(20240501)


# PASS/FAIL lines from the acceptance module, shown in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
