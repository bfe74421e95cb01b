"""Shared pytest configuration: acceptance-result collection and reporting.

test_acceptance.py registers one entry per criterion through
``record_acceptance``; the terminal summary prints one line per criterion so
the final verdicts are visible in any pytest run.
"""

_ACCEPTANCE = {}


def record_acceptance(number, label, passed):
    _ACCEPTANCE[number] = (label, bool(passed))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        label, passed = _ACCEPTANCE[number]
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"criterion {number}: {label}: {status}")
