import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

ROOT = Path(__file__).resolve().parents[1]
_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def record_acceptance():
    """Collects one PASS/FAIL line per acceptance criterion."""
    def record(line: str):
        print(line)
        _ACCEPTANCE_LINES.append(line)
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
