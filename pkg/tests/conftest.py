import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

import acceptance_log  # noqa: E402


def pytest_terminal_summary(terminalreporter):
    found = acceptance_log.lines()
    if found:
        terminalreporter.section("acceptance criteria")
        for line in found:
            terminalreporter.write_line(line)
