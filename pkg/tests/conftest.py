import pytest

from hivetrack.geometry import HiveGeometry

ACCEPTANCE = {}


@pytest.fixture
def geom():
    return HiveGeometry()


@pytest.fixture
def acceptance_log():
    """Record ``(criterion, passed, detail)`` for the end-of-run summary."""
    def record(criterion, passed, detail=""):
        ACCEPTANCE[criterion] = (passed, detail)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[criterion]
        terminalreporter.write_line(
            f"{'PASS' if passed else 'FAIL'}  {criterion}  {detail}".rstrip())
