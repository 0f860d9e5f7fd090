from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_CRITERIA: dict[int, tuple[bool, str]] = {}


def _line(n: int, passed: bool, detail: str) -> str:
    return f"criterion {n:2d}: {'PASS' if passed else 'FAIL'}  {detail}"


@pytest.fixture
def criterion():
    """Record the outcome of one acceptance criterion and print it."""
    def record(n: int, passed: bool, detail: str) -> bool:
        _CRITERIA[n] = (bool(passed), detail)
        print(_line(n, passed, detail))
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(_CRITERIA):
        terminalreporter.write_line(_line(n, *_CRITERIA[n]))
