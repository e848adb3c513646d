"""Shared pytest configuration.

Acceptance tests register one verdict line per criterion through the
``acceptance_report`` fixture; the lines are printed in the terminal summary
so they are visible even with output capturing on.
"""

import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None)
settings.load_profile("default")

_REPORT: dict[int, str] = {}


@pytest.fixture
def acceptance_report():
    def record(number: int, passed: bool, detail: str):
        line = f"{'PASS' if passed else 'FAIL'} criterion {number}: {detail}"
        _REPORT[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _REPORT:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_REPORT):
            terminalreporter.write_line(_REPORT[number])
