"""Shared test plumbing.

The acceptance tests record one verdict line per criterion through the
``criterion`` fixture; the lines are replayed in the terminal summary so a
plain ``pytest -v`` run ends with the full pass/fail scorecard even though
stdout is captured per-test.
"""

import pytest

_VERDICTS = []


@pytest.fixture
def criterion():
    """Record and assert one acceptance-criterion verdict."""

    def check(number, label, ok, detail=""):
        verdict = "PASS" if ok else "FAIL"
        line = f"criterion {number:2d} [{verdict}] {label}"
        if detail:
            line += f" ({detail})"
        _VERDICTS.append(line)
        print(line, flush=True)
        assert ok, line

    return check


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
