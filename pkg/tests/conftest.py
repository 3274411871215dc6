"""Prints the acceptance-gate verdicts after the run, outside pytest's
output capture, so every log shows one line per shipped guarantee."""

VERDICT_LINES = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if VERDICT_LINES:
        terminalreporter.section("acceptance gate")
        for line in VERDICT_LINES:
            terminalreporter.write_line(line)
