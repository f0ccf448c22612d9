"""Replays the acceptance verdict lines after the run, since passing tests
swallow their stdout under default capture."""


def _criterion_lines(report) -> list[str]:
    text = getattr(report, "capstdout", "") or ""
    return [line for line in text.splitlines() if line.startswith("[criterion")]


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = []
    for bucket in ("passed", "failed"):
        for report in terminalreporter.stats.get(bucket, []):
            if "test_acceptance" in getattr(report, "nodeid", ""):
                lines.extend(_criterion_lines(report))
    if not lines:
        return
    lines.sort(key=lambda s: int(s.split("]")[0].split()[-1]))
    terminalreporter.section("acceptance criteria")
    for line in lines:
        terminalreporter.write_line(line)
