import sys
from pathlib import Path

import pytest

from sbppia import PliParameters, bundled_topology
from sbppia.topology import Topology

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture(scope="session")
def params():
    return PliParameters()


@pytest.fixture(scope="session")
def six():
    return bundled_topology("six")


@pytest.fixture(scope="session")
def fourteen():
    return bundled_topology("fourteen")


@pytest.fixture
def ring4():
    return Topology.from_edges([(1, 2, 100), (2, 3, 100), (3, 4, 100), (4, 1, 100)])


@pytest.fixture
def fig1_net():
    """Seven cross-connects arranged so request 1's slot 3 meets different interferers per failure."""
    edges = [
        (1, 2, 100), (2, 3, 100), (5, 2, 100), (2, 4, 100), (5, 4, 100), (6, 4, 100),
        (4, 3, 100), (3, 7, 100), (6, 2, 100), (2, 7, 100), (1, 6, 100),
    ]
    return Topology.from_edges(edges)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(LINES):
            terminalreporter.write_line(line)
