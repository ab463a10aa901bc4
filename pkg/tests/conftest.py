import time

import pytest

from pmqds.domain import ChannelModel
from pmqds.optimize import SearchConfig, sweep

SWEEP_GRID = list(range(0, 201, 10))

_ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def acceptance_log():
    return _ACCEPTANCE


@pytest.fixture(scope="session")
def default_sweep():
    """Full 0-200 km sweep on the default channel, shared by the optimiser and acceptance tests."""
    t0 = time.perf_counter()
    rows = sweep(SWEEP_GRID, ChannelModel(), search_config=SearchConfig())
    return rows, time.perf_counter() - t0


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
