import numpy as np
import pytest

from tvsmooth.core import SnapshotSequence, TimeGrid


def random_snapshots(n=8, m=10, p=0.4, seed=0):
    rng = np.random.default_rng(seed)
    adj = np.zeros((m, n, n))
    iu, ju = np.triu_indices(n, 1)
    for k in range(m):
        adj[k, iu, ju] = rng.random(iu.size) < p
        adj[k] += adj[k].T
    return SnapshotSequence(TimeGrid.equispaced(m), tuple(f"v{i}" for i in range(n)), adj)


def random_prob(n, rng, symmetric=True):
    P = rng.random((n, n))
    return 0.5 * (P + P.T) if symmetric else P


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_CRITERIA: dict = {}


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None or call.when not in ("setup", "call"):
        return
    num, title = mark.args
    failed = call.excinfo is not None and not call.excinfo.errisinstance(pytest.skip.Exception)
    ok, _ = _CRITERIA.get(num, (True, title))
    if call.when == "call" or failed:
        _CRITERIA[num] = (ok and not failed, title)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        ok, title = _CRITERIA[num]
        terminalreporter.write_line(f"criterion {num:>2}: {'PASS' if ok else 'FAIL'}  {title}")
