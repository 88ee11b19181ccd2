from importlib import resources
from pathlib import Path

import pytest

from gridrestore.grid import load_grid, parse_grid

DATA = Path(str(resources.files("gridrestore") / "data"))
SCENARIOS = DATA / "scenarios"

SMALL = """\
vlimits umin=0.81 umax=1.21 u0=1
bus s pl=0 ql=0 slack
bus a pl=10 ql=5
bus b pl=20 ql=10
bus c pl=30 ql=0 w=2
bus d pl=5 ql=1 dg pmin=0 pmax=40 qmin=-20 qmax=20
bus e pl=15 ql=5
branch s a r=0.01 x=0.02 smax=200
branch a b r=0.01 x=0.01 smax=200
branch a c r=0.02 x=0.01 smax=200
branch s d r=0.01 x=0.01 smax=200 noswitch
branch d e r=0.01 x=0.01 smax=200
branch b e r=0.01 x=0.01 smax=200 tie
"""


@pytest.fixture(scope="session")
def ieee37():
    return load_grid(DATA / "ieee37.grid")


@pytest.fixture(scope="session")
def four_feeder():
    return load_grid(DATA / "four_feeder.grid")


@pytest.fixture
def small():
    return parse_grid(SMALL)


VERDICTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance")
        for line in VERDICTS:
            terminalreporter.write_line(line)
