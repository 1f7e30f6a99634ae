import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from helpers import SNIPPET  # noqa: E402

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def snippet_source() -> str:
    return SNIPPET


@pytest.fixture
def record_criterion():
    """Record one PASS/FAIL line per acceptance criterion for the summary."""

    def record(label: str, ok: bool, detail: str = "") -> bool:
        ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] {label}" + (f" ({detail})" if detail else ""))
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
