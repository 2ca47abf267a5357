import sys
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"
sys.path.insert(0, str(FIXTURES))

PROGRAMS = FIXTURES / "programs"

_RANK = {"PASS": 0, "SKIP": 1, "FAIL": 2}
_criteria: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by a test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or rep.skipped or rep.failed:
        number, title = marker.args
        status = "SKIP" if rep.skipped else ("PASS" if rep.passed else "FAIL")
        prev = _criteria.get(number)
        if prev is None or _RANK[status] > _RANK[prev[0]]:
            _criteria[number] = (status, title)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(_criteria):
        status, title = _criteria[number]
        terminalreporter.write_line(f"criterion {number}: {status:4}  {title}")


@pytest.fixture(scope="session")
def palindrome_src() -> str:
    return (PROGRAMS / "palindrome.dfy").read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def arith_complete_src() -> str:
    return (PROGRAMS / "arith_complete.dfy").read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def arith_incomplete_src() -> str:
    return (PROGRAMS / "arith_incomplete.dfy").read_text(encoding="utf-8")
