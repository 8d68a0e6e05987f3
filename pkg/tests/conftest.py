import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by the test")


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            _criteria[item.nodeid] = {"number": mark.args[0], "title": mark.args[1], "outcome": "NOT RUN",
                                      "details": []}


def pytest_runtest_logreport(report):
    entry = _criteria.get(report.nodeid)
    if entry is None:
        return
    if report.when == "call" or report.failed or report.skipped:
        if report.failed:
            entry["outcome"] = "FAIL"
        elif report.skipped:
            entry["outcome"] = "SKIP"
        elif entry["outcome"] != "FAIL":
            entry["outcome"] = "PASS"
        entry["details"] = [v for k, v in report.user_properties if k == "detail"]


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for entry in sorted(_criteria.values(), key=lambda e: e["number"]):
        terminalreporter.write_line(f"{entry['outcome']} criterion {entry['number']:>2}: {entry['title']}")
        for line in entry["details"]:
            terminalreporter.write_line(f"      {line}")
