import pytest

ACCEPTANCE_LINES = []


@pytest.fixture
def criterion_log():
    """Collects ``(criterion, label, passed, detail)`` for the end-of-run summary."""
    def log(number, label, passed, detail=""):
        ACCEPTANCE_LINES.append((number, label, bool(passed), detail))
        return bool(passed)
    return log


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number, label, passed, detail in sorted(ACCEPTANCE_LINES, key=lambda x: x[0]):
        terminalreporter.write_line(
            f"[{number}] {'PASS' if passed else 'FAIL'} {label}" + (f": {detail}" if detail else ""))
