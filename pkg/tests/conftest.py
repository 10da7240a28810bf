import numpy as np
import pytest

from autobeam.graph import SearchGraph
from autobeam.metric import MetricKind, VectorDataset


def make_dataset(count, dim, seed=0, dist="uniform", metric=MetricKind.L2):
    rng = np.random.default_rng(seed)
    if dist == "uniform":
        data = rng.random((count, dim), dtype=np.float32)
    else:
        data = rng.standard_normal((count, dim), dtype=np.float32)
    return VectorDataset.from_array(data, metric)


def build_graph(count, dim, seed=0, dist="uniform", **kw):
    ds = make_dataset(count, dim, seed, dist)
    g = SearchGraph(ds, seed=seed, **kw)
    g.extend(workers=1)
    return g


@pytest.fixture(scope="session")
def graph_2k():
    return build_graph(2000, 8, seed=11)


@pytest.fixture(scope="session")
def graph_5k():
    return build_graph(5000, 8, seed=5)


ACCEPTANCE_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_LINES] = []


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line per acceptance criterion, then assert it."""
    lines = request.config.stash[ACCEPTANCE_LINES]

    def check(number, title, ok, detail):
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        lines.append(line)
        print(line)
        assert ok, line

    return check


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
