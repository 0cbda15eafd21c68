from __future__ import annotations

import shutil
import sys
from pathlib import Path

import pytest

FIXTURES = Path(__file__).resolve().parent / "fixtures"
GOLDEN = FIXTURES / "golden"

sys.path.insert(0, str(FIXTURES))


@pytest.fixture
def golden_root() -> Path:
    """The committed clean corpus. Read-only."""
    return GOLDEN


@pytest.fixture
def corpus_root(tmp_path: Path) -> Path:
    """A writable copy of the golden corpus."""
    dest = tmp_path / "repo"
    shutil.copytree(GOLDEN, dest)
    return dest


# -- acceptance summary ------------------------------------------------------------------

_CRITERIA: dict[int, tuple[str, str, str]] = {}


def pytest_configure(config) -> None:
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (report.when != "call" and report.passed):
        return
    number, title = mark.args
    detail = dict(item.user_properties).get("detail", "")
    if report.failed and not detail:
        detail = report.longrepr.reprcrash.message if hasattr(report.longrepr, "reprcrash") else "error"
    _CRITERIA[number] = (title, "PASS" if report.passed else "FAIL", str(detail))


def pytest_terminal_summary(terminalreporter) -> None:
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, verdict, detail = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:>2} {verdict}  {title}: {detail}")
