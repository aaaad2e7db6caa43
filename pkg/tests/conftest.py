from collections import OrderedDict

import pytest

_criteria = OrderedDict()


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "criterion(number, title): acceptance criterion checked by this test")


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m is not None:
            num, title = m.args
            _criteria.setdefault(num, {"title": title, "outcomes": {}})


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("criterion")
    if m is None:
        return
    entry = _criteria[m.args[0]]["outcomes"]
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        entry[item.nodeid] = rep.passed


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for num, info in sorted(_criteria.items()):
        outcomes = info["outcomes"]
        if not outcomes:
            status = "NOT RUN"
        else:
            status = "PASS" if all(outcomes.values()) else "FAIL"
        terminalreporter.write_line(f"criterion {num}: {status}  {info['title']}")
