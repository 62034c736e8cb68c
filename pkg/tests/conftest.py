import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from couplingnet.synth import SynthConfig, generate_corpus  # noqa: E402

_criteria: dict[int, dict] = {}


def pytest_runtest_logreport(report):
    marker = getattr(report, "criterion", None)
    if marker is None:
        return
    number, title = marker
    entry = _criteria.setdefault(number, {"title": title, "outcome": "PASS"})
    if report.when == "call" and report.failed or report.when == "setup" and report.failed:
        entry["outcome"] = "FAIL"
    elif report.skipped and entry["outcome"] == "PASS":
        entry["outcome"] = "SKIP"


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        report.criterion = (marker.args[0], marker.args[1])


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        entry = _criteria[number]
        terminalreporter.write_line(f"criterion {number:>2} {entry['outcome']:<4} {entry['title']}")


@pytest.fixture(scope="session")
def reference_synth():
    """The reference synthetic configuration and its generated corpus."""
    return generate_corpus(SynthConfig())


@pytest.fixture(scope="session")
def reference_corpus(reference_synth):
    return reference_synth.corpus()
