"""Shared pytest plumbing.

Acceptance tests register one line per criterion; the summary hook reprints
them at the end of the run so the pass/fail ledger is always visible, even
with output capture on.
"""

from __future__ import annotations

_ACCEPTANCE_LINES: list[str] = []


def record_criterion(line: str) -> None:
    _ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
