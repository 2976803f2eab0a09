import re
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures() -> Path:
    return FIXTURES


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Print one pass/fail line per acceptance criterion."""
    rows = []
    for outcome, flag in (("passed", "PASS"), ("failed", "FAIL"), ("error", "FAIL")):
        for report in terminalreporter.stats.get(outcome, []):
            if getattr(report, "when", "call") != "call":
                continue
            match = re.search(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)", report.nodeid)
            if match:
                rows.append((int(match.group(1)), match.group(2), flag))
    if not rows:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for number, name, flag in sorted(rows):
        terminalreporter.write_line(f"criterion {number} ({name.replace('_', ' ')}): {flag}")
