import pytest

# criterion number -> (passed, detail); filled by the acceptance suite
VERDICTS = {}


def record(number: int, passed: bool, detail: str) -> bool:
    VERDICTS[number] = (bool(passed), detail)
    return bool(passed)


@pytest.fixture
def verdict():
    return record


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(VERDICTS):
        passed, detail = VERDICTS[n]
        terminalreporter.write_line(f"[criterion {n}] {'PASS' if passed else 'FAIL'} {detail}")
