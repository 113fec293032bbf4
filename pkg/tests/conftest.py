import pytest

_CRITERIA: dict[int, tuple[str, bool, str]] = {}


@pytest.fixture
def criterion(capsys):
    """Record (and echo) the verdict of one acceptance criterion."""

    def record(number: int, title: str, passed: bool, detail: str) -> bool:
        _CRITERIA[number] = (title, passed, detail)
        with capsys.disabled():
            print(f"\ncriterion {number} [{'PASS' if passed else 'FAIL'}] {title}: {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, passed, detail = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d} [{'PASS' if passed else 'FAIL'}] {title}: {detail}")
