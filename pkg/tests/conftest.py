import numpy as np
import pytest

ACCEPTANCE_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running checks")
    config.stash[ACCEPTANCE_LINES] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(lines):
        terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line for the terminal summary, then assert."""

    def record(number: int, title: str, ok: bool, detail: str) -> None:
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        request.config.stash[ACCEPTANCE_LINES].append((number, line))
        print(line)
        assert ok, line

    return record
