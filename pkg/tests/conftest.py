"""Per-criterion PASS/FAIL summary for tests marked ``criterion``.

A criterion passes when every test carrying its number passed.
"""
from collections import OrderedDict

_results = OrderedDict()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by this test")


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark:
            num, title = mark.args
            entry = _results.setdefault(num, {"title": title, "outcomes": {}})
            entry["outcomes"][item.nodeid] = "not run"


def pytest_runtest_logreport(report):
    for entry in _results.values():
        if report.nodeid in entry["outcomes"]:
            if report.when == "call" or report.outcome != "passed":
                prev = entry["outcomes"][report.nodeid]
                if prev in ("not run", "passed"):
                    entry["outcomes"][report.nodeid] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_results):
        entry = _results[num]
        outcomes = entry["outcomes"].values()
        if all(o == "passed" for o in outcomes):
            verdict = "PASS"
        elif any(o == "failed" for o in outcomes):
            verdict = "FAIL"
        else:
            verdict = "NOT RUN"
        terminalreporter.write_line(f"criterion {num}: {verdict}  {entry['title']}")
