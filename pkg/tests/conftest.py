import re

import pytest

_LINES = []


def _order(line):
    tag = line.split()[1]
    return int(re.match(r"\d+", tag).group()), tag


@pytest.fixture
def acceptance():
    """Record one ``ACCEPTANCE <id> PASS|FAIL <title>`` line; returns the verdict."""
    def record(num, title, ok, detail=""):
        line = f"ACCEPTANCE {str(num):<3} {'PASS' if ok else 'FAIL'} {title}" + (f" ({detail})" if detail else "")
        print(line)
        _LINES.append(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_LINES, key=_order):
            terminalreporter.write_line(line)
