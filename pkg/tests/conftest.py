import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

import gate  # noqa: E402


def pytest_terminal_summary(terminalreporter):
    if gate.LINES:
        terminalreporter.section("acceptance criteria")
        for line in gate.LINES:
            terminalreporter.write_line(line)
