import pytest

# filled by test_acceptance: (criterion number, title, passed, detail)
ACCEPTANCE_LINES: list = []


@pytest.fixture
def acceptance_record():
    def record(number, title, passed, detail):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:>2}: {title}: {detail}"
        print(line)
        ACCEPTANCE_LINES.append((number, line))
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
