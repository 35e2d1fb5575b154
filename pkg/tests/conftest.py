import pytest

_criteria: list[tuple[int, str, str, str]] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    # one line per criterion: the call phase, or a failing setup (fixture error)
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        status = "PASS" if rep.passed else ("SKIP" if rep.skipped else "FAIL")
        detail = "; ".join(f"{k}={v}" for k, v in item.user_properties)
        _criteria.append((mark.args[0], status, mark.args[1], detail))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for num, status, title, detail in sorted(_criteria):
        line = f"{status} criterion {num:2d}: {title}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
