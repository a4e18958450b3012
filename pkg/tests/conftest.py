import os
import sys

sys.path.insert(0, os.path.dirname(__file__))


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            props = dict(getattr(rep, "user_properties", []))
            # failures in a fixture surface at setup rather than call
            if "criterion" in props and (rep.when == "call" or outcome != "passed"):
                lines.append((rep.nodeid, "PASS" if outcome == "passed" else "FAIL",
                              props["criterion"]))
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, status, text in sorted(lines):
            terminalreporter.write_line(f"{status}  {text}")
