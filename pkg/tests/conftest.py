import sys
from pathlib import Path

# tests import the shared oracles as a plain module
sys.path.insert(0, str(Path(__file__).parent))

ACCEPTANCE = []


def record(criterion, ok, detail):
    """Log one acceptance criterion outcome for the end-of-run summary."""
    ACCEPTANCE.append((criterion, bool(ok), detail))
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, ok, detail in sorted(ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {criterion:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
