"""Acceptance-criterion reporting.

Tests marked ``@pytest.mark.criterion(n, title)`` are collected into a summary
printed at the end of the run, one PASS/FAIL line per criterion. A test can
attach ``("advisory", text)`` to ``user_properties`` to mark its line as
non-gating.
"""

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_RESULTS: dict[int, dict] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    entry = _RESULTS.setdefault(number, {"title": title, "passed": True, "seen": False, "notes": []})
    if report.when == "call" or report.failed:
        entry["seen"] = True
        entry["passed"] = entry["passed"] and report.passed
    if report.when == "call":
        entry["notes"].extend(text for key, text in item.user_properties if key in ("advisory", "note"))
        entry["advisory"] = entry.get("advisory") or any(key == "advisory" for key, _ in item.user_properties)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_RESULTS):
        entry = _RESULTS[number]
        if not entry["seen"]:
            continue
        status = "PASS" if entry["passed"] else "FAIL"
        if entry.get("advisory"):
            status = "ADVISORY"
        tr.write_line(f"criterion {number}: {status:<8} {entry['title']}")
        for note in entry["notes"]:
            tr.write_line(f"    {note}")
