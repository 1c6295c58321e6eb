import pytest

# criterion number -> (passed, detail), filled by tests marked ``criterion``
ACCEPTANCE = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or report.when != "call":
        return
    detail = dict(item.user_properties).get("detail", "")
    ACCEPTANCE[mark.args[0]] = (report.passed, detail)
    if not report.passed and not detail:
        ACCEPTANCE[mark.args[0]] = (False, str(call.excinfo.value).splitlines()[0] if call.excinfo else "")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
