import math

import pytest

from sflab.dirac import Region

BAND = Region("band", 0.25, 0.75)
PI = math.pi

# verdict lines collected by test_acceptance, echoed in the terminal summary
VERDICT_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if VERDICT_LINES:
        terminalreporter.section("acceptance criteria")
        for line in VERDICT_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    import numpy as np
    return np.random.default_rng(1234)
