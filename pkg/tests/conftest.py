"""Shared pytest plumbing.

The acceptance module records one PASS/FAIL line per criterion while it
runs; default fd-level capture would swallow those for passing tests, so
they are replayed here after the summary, outside capture.
"""

import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    mod = (sys.modules.get("test_acceptance")
           or sys.modules.get("tests.test_acceptance"))
    lines = getattr(mod, "REPORT_LINES", None) if mod else None
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
