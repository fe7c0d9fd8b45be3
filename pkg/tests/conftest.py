"""Collector for the acceptance gate: each gate test reports one verdict
line, and the lines are printed together after the run."""

import pytest

_LINES = []


@pytest.fixture
def acceptance_line():
    """Record a single 'criterion NN ... PASS/FAIL' line for the summary."""
    def record(name: str, passed: bool, detail: str = ""):
        _LINES.append((name, "PASS" if passed else "FAIL", detail))
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for name, status, detail in sorted(_LINES):
        line = f"{name:<46} {status}"
        if detail:
            line += f"   {detail}"
        terminalreporter.write_line(line)
