import pytest

from goalsat.rulespec import load_builtin

CANON_P5 = ("S22", "S23", "S24", "S25")


@pytest.fixture(scope="session")
def demo():
    return load_builtin("demo")


@pytest.fixture(scope="session")
def p5rs():
    return load_builtin("multibypass_p5")


@pytest.fixture(scope="session")
def p5(p5rs):
    return p5rs["P5"]



_CRITERIA: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark and (rep.when == "call" or rep.failed):
        _CRITERIA[mark.args[0]] = (mark.args[1], "PASS" if rep.passed else "FAIL")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, status = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n}: {status}  {title}")
