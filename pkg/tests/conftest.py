import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        status, title, secs, note = RESULTS[n]
        line = f"criterion {n:2d} {status}  {title}  ({secs:.1f} s)"
        terminalreporter.write_line(line + (f"  {note}" if note else ""))
