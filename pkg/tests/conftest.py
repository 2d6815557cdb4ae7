import numpy as np
import pytest

from semantic_bmm.distributions import MapParams


def random_map(rng, K, J, spread=1.0):
    return MapParams(
        rng.uniform(0.5, 5.0, K),
        rng.uniform(-spread, spread, (K, J)),
        rng.uniform(0.2, 5.0, (K, J)),
        rng.uniform(1.0, 10.0, (K, J)),
        rng.uniform(0.2, 5.0, (K, J)),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance verdicts, one line per criterion, echoed after the test summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
