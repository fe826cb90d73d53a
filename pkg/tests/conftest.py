import numpy as np
import pytest

from mixview.tensor import checked


@pytest.fixture(autouse=True)
def _checked_mode(request):
    """NaN/Inf checking is on for unit tests; timed acceptance runs opt out."""
    with checked(not request.node.get_closest_marker("unchecked")):
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_configure(config):
    config.addinivalue_line("markers", "unchecked: run with NaN/Inf checking disabled")
    config.addinivalue_line("markers", "slow: long-running end-to-end check")


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_log(request):
    """Record one PASS/FAIL line per acceptance criterion for the terminal summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def log(criterion: int, ok: bool, detail: str, soft: bool = False) -> None:
        kind = "soft" if soft else "hard"
        line = f"{'PASS' if ok else 'FAIL'} criterion {criterion} ({kind}): {detail}"
        lines.append(line)
        print(line)

    return log


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
