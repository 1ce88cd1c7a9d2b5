import pytest

# Filled by tests/test_acceptance.py: (criterion number, passed, detail).
ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    def add(number, passed, detail):
        ACCEPTANCE_LINES.append((number, bool(passed), detail))
        print(f"{'PASS' if passed else 'FAIL'} criterion {number}: {detail}")

    return add


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} criterion {number:>2}: {detail}")
