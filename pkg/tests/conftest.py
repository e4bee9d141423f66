"""Shared pytest wiring: the acceptance gate's per-criterion verdict lines."""

criterion_lines: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if criterion_lines:
        terminalreporter.section("acceptance criteria")
        for line in criterion_lines:
            terminalreporter.write_line(line)
