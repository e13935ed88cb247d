import pytest
from hypothesis import settings

from tabledata import EXAMPLE_PREDS

settings.register_profile("default", derandomize=True, deadline=None)
settings.load_profile("default")


@pytest.fixture
def example_preds():
    return [tuple(p) for p in EXAMPLE_PREDS]


_criteria: list[tuple[str, str, str]] = []


def pytest_runtest_logreport(report):
    if report.when != "call" or "test_acceptance.py" not in report.nodeid:
        return
    title = dict(report.user_properties).get("criterion")
    if title:
        _criteria.append((title, "PASS" if report.passed else "FAIL",
                          dict(report.user_properties).get("detail", "")))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for title, status, detail in _criteria:
        terminalreporter.write_line(f"{status}  {title}" + (f"  [{detail}]" if detail else ""))
