import pytest

ACCEPTANCE: dict = {}


@pytest.fixture
def record():
    def _record(k: int, passed: bool, detail: str = ""):
        ACCEPTANCE[k] = (passed, detail)
        print(f"CRITERION {k}: {'PASS' if passed else 'FAIL'} {detail}")

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"CRITERION {k}: {'PASS' if passed else 'FAIL'} {detail}")
