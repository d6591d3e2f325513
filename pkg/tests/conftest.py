"""Shared pytest fixtures and the acceptance summary hook."""

import pytest

_LINES = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_LINES] = {}


@pytest.fixture
def criterion(request):
    """Return ``record(number, ok, detail)`` that stores one summary line."""

    def record(number: int, ok: bool, detail: str) -> bool:
        status = "PASS" if ok else "FAIL"
        request.config.stash[_LINES][number] = f"criterion {number}: {status}  {detail}"
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LINES, {})
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(lines):
        terminalreporter.write_line(lines[key])
