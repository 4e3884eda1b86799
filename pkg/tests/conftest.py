from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "repo", deadline=None, derandomize=True, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repo")

FIXTURES = Path(__file__).parent / "fixtures"

FAMILY_GRID = [(1, g) for g in (0.75, 1.0, 2.0, 3.0, 5.0, 7.0)] + \
    [(f, g) for f in (2, 3) for g in (2.5, 3.0, 5.0, 7.0)]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def fixture_csv():
    return FIXTURES / "synthetic_fam1_g3.csv"


def pytest_terminal_summary(terminalreporter):
    import sys
    log = sys.modules.get("acceptance_log")
    if log is None or not log.LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(log.LINES, key=lambda s: int(s.split()[1])):
        terminalreporter.write_line(line)
