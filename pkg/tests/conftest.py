"""Shared pytest wiring.

The acceptance module holds one test per advertised guarantee; this hook
prints a compact verdict block after the run so a log scan shows exactly
which guarantee broke without digging through tracebacks.
"""

_verdicts: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.failed:
        _verdicts[name] = "FAIL"
    elif report.skipped:
        _verdicts.setdefault(name, "skip")
    elif report.when == "call" and report.passed:
        _verdicts.setdefault(name, "pass")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _verdicts:
        return
    terminalreporter.section("acceptance verdicts")
    for name, verdict in _verdicts.items():
        terminalreporter.write_line(f"{verdict:>4}  {name}")
