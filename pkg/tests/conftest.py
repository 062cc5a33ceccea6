"""Shared pytest plumbing: surface acceptance-criterion results.

The acceptance tests register one [PASS]/[FAIL] line each; printing from
inside a test is swallowed by output capture, so the lines are replayed in
a dedicated section of the terminal summary.
"""

acceptance_lines: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_lines:
            terminalreporter.line(line)
