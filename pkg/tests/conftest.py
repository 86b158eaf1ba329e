import sys
from pathlib import Path

import pytest

# helper modules (oracles) live next to the tests
sys.path.insert(0, str(Path(__file__).parent))

_DETAILS: dict = {}
_OUTCOMES: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): numbered acceptance criterion")


@pytest.fixture
def report(request):
    """Record a one-line measurement for the acceptance summary."""
    marker = request.node.get_closest_marker("acceptance")

    def note(text):
        _DETAILS[marker.args[0]] = text

    return note


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        _OUTCOMES[marker.args[0]] = (marker.args[1], rep.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_OUTCOMES):
        title, outcome = _OUTCOMES[number]
        status = {"passed": "PASS", "failed": "FAIL"}.get(outcome, outcome.upper())
        detail = _DETAILS.get(number, "")
        terminalreporter.write_line(f"[{status}] {number}. {title}: {detail}")
