import pytest

from helpers import build_scenario

_CRITERIA = {}


@pytest.fixture
def make_scenario():
    return build_scenario


@pytest.fixture
def criterion(capsys):
    """Record one acceptance line, print it, and fail the test if it did not pass."""

    def record(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
        _CRITERIA[number] = line
        with capsys.disabled():
            print("\n" + line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[number])
