import pytest

from wcoj.query import parse_query
from wcoj.workbench import FIVE_ATOM_QUERY, TRIANGLE_QUERY


@pytest.fixture
def triangle():
    return parse_query(TRIANGLE_QUERY)


@pytest.fixture
def five_atom():
    return parse_query(FIVE_ATOM_QUERY)


# one line per acceptance criterion, printed after the run
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
