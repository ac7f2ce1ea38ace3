import pytest

_ACCEPTANCE = []


@pytest.fixture
def criterion(request):
    """Record one acceptance line: ``criterion(number, passed, detail)``."""

    def record(number, passed, detail=""):
        _ACCEPTANCE.append((number, bool(passed), detail))
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'} {detail}".rstrip()
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(_ACCEPTANCE):
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'} {detail}".rstrip())
