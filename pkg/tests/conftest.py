import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

_criteria = {}
_RANK = {"PASS": 0, "SKIP": 1, "FAIL": 2}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        status = "PASS" if report.passed else "SKIP" if report.skipped else "FAIL"
        number, title = marker.args
        prev = _criteria.get(number)
        # a criterion spread over several tests reports its worst outcome
        if prev is None or _RANK[status] > _RANK[prev[1]]:
            _criteria[number] = (title, status)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, status = _criteria[number]
        terminalreporter.write_line(f"criterion {number}: {status:4s}  {title}")
