import pytest

_RESULTS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when not in ("setup", "call"):
        return
    if rep.when == "setup" and rep.passed:
        return
    number, title = marker.args
    entry = _RESULTS.setdefault(number, {"title": title, "parts": []})
    if hasattr(rep, "wasxfail"):
        status = "FAIL (known)"
    elif rep.passed:
        status = "PASS"
    elif rep.skipped:
        status = "SKIP"
    else:
        status = "FAIL"
    detail = dict(item.user_properties).get("detail", "")
    entry["parts"].append((item.name, status, detail))


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_RESULTS):
        entry = _RESULTS[number]
        statuses = [s for _, s, _ in entry["parts"]]
        overall = "PASS" if all(s == "PASS" for s in statuses) else "FAIL"
        tr.write_line(f"criterion {number}: {overall}  {entry['title']}")
        for name, status, detail in entry["parts"]:
            tr.write_line(f"    {status:12s} {name}  {detail}")
