"""Shared fixtures and the acceptance summary hook."""

import pytest

_ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.fixture
def acceptance_log():
    """Record one summary line per acceptance criterion.

    Tests call ``record(label, passed, detail)`` before asserting, so the
    terminal summary shows every criterion's outcome even when one fails.
    """

    def record(label: str, passed: bool, detail: str = "") -> None:
        _ACCEPTANCE.append((label, bool(passed), detail))

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, passed, detail in _ACCEPTANCE:
        mark = "PASS" if passed else "FAIL"
        line = f"[{mark}] {label}"
        if detail:
            line += f" | {detail}"
        terminalreporter.write_line(line)
