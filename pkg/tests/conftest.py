"""Shared pytest wiring.

The acceptance tests register one verdict line each; the terminal summary
prints the scoreboard after the run, where output capture can no longer
swallow it.
"""

ACCEPTANCE_VERDICTS: list[str] = []


def record_verdict(line: str) -> None:
    ACCEPTANCE_VERDICTS.append(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_VERDICTS:
        terminalreporter.section("acceptance scoreboard")
        for line in ACCEPTANCE_VERDICTS:
            terminalreporter.write_line(line)
