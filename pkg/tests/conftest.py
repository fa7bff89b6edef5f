"""Shared hooks: acceptance checks report one line each at the end of the run."""

import pytest

_LINES = []


@pytest.fixture
def report():
    """Record ``(criterion, passed, detail)``; the line is printed in the terminal summary."""

    def add(label, passed, detail=""):
        _LINES.append(f"[{'PASS' if passed else 'FAIL'}] {label}" + (f": {detail}" if detail else ""))
        print(_LINES[-1])
        return passed

    return add


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance")
        for line in _LINES:
            terminalreporter.write_line(line)
