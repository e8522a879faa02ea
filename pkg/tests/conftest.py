import sys
from pathlib import Path

# make the sibling oracles module importable from every test file
sys.path.insert(0, str(Path(__file__).parent))

# one line per acceptance criterion, printed after the run so the verdicts
# survive pytest's output capture
CRITERION_LINES = []


def record_criterion(number: int, name: str, passed: bool) -> None:
    CRITERION_LINES.append(
        f"criterion {number} ({name}): {'PASS' if passed else 'FAIL'}")


def pytest_terminal_summary(terminalreporter):
    if not CRITERION_LINES:
        return
    terminalreporter.write_line("")
    terminalreporter.write_line("acceptance criteria:")
    for line in sorted(CRITERION_LINES):
        terminalreporter.write_line(line)
