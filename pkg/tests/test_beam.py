import numpy as np
import pytest

from autobeam.beam import BeamParams, VisitedSet, beam_search, knn_fitness
from autobeam.errors import UsageError
from autobeam.evaluation import brute_force_knn
from autobeam.metric import distance

from conftest import make_dataset


class Counting:
    def __init__(self, fn):
        self.fn = fn
        self.calls = {}

    def __call__(self, node):
        self.calls[node] = self.calls.get(node, 0) + 1
        return self.fn(node)


def complete_graph(n):
    ids = list(range(n))
    return lambda u: [v for v in ids if v != u]


def test_exhaustive_params_on_complete_graph_are_exact():
    ds = make_dataset(200, 8, seed=1)
    rng = np.random.default_rng(2)
    for _ in range(10):
        q = rng.random(8, dtype=np.float32)
        seed = int(rng.integers(200))
        res = beam_search(knn_fitness(q, ds), complete_graph(200), [seed], 32,
                          BeamParams(200, 2.0, 200))
        assert res.ids == brute_force_knn(ds, q, 32).tolist()


def test_maxvisits_equal_to_seed_count_stops_before_expansion():
    fit = {0: 3.0, 1: 1.0, 2: 2.0, 3: 0.5}
    res = beam_search(fit.__getitem__, lambda u: [3], [0, 1, 2], 5, BeamParams(4, 1.0, 3))
    assert res.visits == 3
    assert list(res.neighbors) == [(1.0, 1), (2.0, 2), (3.0, 0)]


def test_zero_delta_expands_only_once():
    ds = make_dataset(50, 4, seed=3)
    q = np.full(4, 0.5, dtype=np.float32)
    adj = {u: [(u + j) % 50 for j in (1, 2, 3)] for u in range(50)}
    expanded = []

    def nb(u):
        expanded.append(u)
        return adj[u]

    res = beam_search(knn_fitness(q, ds), nb, [0, 10], 10, BeamParams(8, 0.0, 10_000))
    assert expanded == [min((0, 10), key=lambda u: distance("l2", q, ds[u]))]
    assert set(res.ids) == {0, 10, *adj[expanded[0]]}


def test_no_node_evaluated_twice():
    ds = make_dataset(300, 6, seed=4)
    rng = np.random.default_rng(5)
    adj = {u: rng.choice(300, 12, replace=False).tolist() for u in range(300)}
    for _ in range(20):
        q = rng.random(6, dtype=np.float32)
        fit = Counting(knn_fitness(q, ds))
        res = beam_search(fit, adj.__getitem__, [0, 1, 2, 1], 16, BeamParams(8, 1.1, 10_000))
        assert max(fit.calls.values()) == 1
        assert res.visits == len(fit.calls)


def test_visits_bounded_by_maxvisits():
    ds = make_dataset(300, 6, seed=6)
    rng = np.random.default_rng(7)
    adj = {u: rng.choice(300, 10, replace=False).tolist() for u in range(300)}
    for maxvisits in (1, 5, 17, 60, 1000):
        q = rng.random(6, dtype=np.float32)
        res = beam_search(knn_fitness(q, ds), adj.__getitem__, [3, 4], 10,
                          BeamParams(8, 1.0, maxvisits))
        assert res.visits <= maxvisits
        assert res.scores == sorted(res.scores)


def original_search(fitness, neighbors_of, seeds, k, bsize):
    """Beam search that admits a neighbor to the beam only if it fits within R's max."""
    R, B, seen = [], [], set()
    for s in seeds:
        if s not in seen:
            seen.add(s)
            R.append((fitness(s), s))
    R = sorted(R, key=lambda t: t[0])[:k]
    B = [R[0]]
    while B:
        _, p = B.pop(0)
        for c in neighbors_of(p):
            if c in seen:
                continue
            seen.add(c)
            f = fitness(c)
            R = sorted(R + [(f, c)], key=lambda t: t[0])[:k]
            if f <= R[-1][0]:
                B = sorted(B + [(f, c)], key=lambda t: t[0])[:bsize]
    return [c for _, c in R]


def test_unit_delta_reproduces_original_rule():
    ds = make_dataset(400, 5, seed=8)
    rng = np.random.default_rng(9)
    adj = {u: rng.choice(400, 8, replace=False).tolist() for u in range(400)}
    for _ in range(20):
        q = rng.random(5, dtype=np.float32)
        fit = knn_fitness(q, ds)
        got = beam_search(fit, adj.__getitem__, [0, 1], 10, BeamParams(4, 1.0, 10**9))
        assert got.ids == original_search(fit, adj.__getitem__, [0, 1], 10, 4)


def test_deterministic():
    ds = make_dataset(300, 6, seed=10)
    adj = {u: [(u * 7 + j) % 300 for j in range(1, 9)] for u in range(300)}
    q = np.full(6, 0.3, dtype=np.float32)
    a = beam_search(knn_fitness(q, ds), adj.__getitem__, [0], 10, BeamParams(4, 1.1, 500))
    b = beam_search(knn_fitness(q, ds), adj.__getitem__, [0], 10, BeamParams(4, 1.1, 500))
    assert list(a.neighbors) == list(b.neighbors) and a.visits == b.visits


def test_compiled_search_matches_generic(graph_2k):
    g = graph_2k
    rng = np.random.default_rng(11)
    queries = rng.random((40, 8), dtype=np.float32)
    for bsize, delta, maxvisits in [(8, 1.0, 10**9), (16, 1.2, 10**9), (4, 0.8, 50), (32, 1.0, 300)]:
        ids, dists, counts, visits = g.search_batch(queries, 16, bsize=bsize, delta=delta,
                                                    maxvisits=maxvisits)
        for j, q in enumerate(queries):
            ref = beam_search(knn_fitness(q, g.dataset), g.neighbors, g.hints.tolist(), 16,
                              BeamParams(bsize, delta, maxvisits))
            assert ids[j, : counts[j]].tolist() == ref.ids
            assert visits[j] == ref.visits
            np.testing.assert_allclose(dists[j, : counts[j]], ref.scores, rtol=1e-9)


def test_empty_seeds_rejected():
    with pytest.raises(UsageError):
        beam_search(lambda u: 0.0, lambda u: [], [], 3, BeamParams(2, 1.0, 10))


def test_params_validation():
    with pytest.raises(UsageError):
        BeamParams(0, 1.0, 10)
    with pytest.raises(UsageError):
        BeamParams(2, 1.0, 0)


def test_knn_fitness_examples():
    ds = make_dataset(200, 8, seed=12)
    fit = knn_fitness(ds[7], ds)
    assert fit(7) == 0.0
    rng = np.random.default_rng(13)
    q = rng.random(8, dtype=np.float32)
    fit = knn_fitness(q, ds)
    for i in rng.integers(0, 200, 100):
        assert fit(int(i)) == pytest.approx(distance("l2", q, ds[int(i)]), rel=1e-12)
    assert fit.evaluations == 100
    order = sorted(range(200), key=lambda i: (fit(i), i))
    assert order[:32] == brute_force_knn(ds, q, 32).tolist()
    with pytest.raises(UsageError):
        knn_fitness(np.zeros(3), ds)


def test_visited_set():
    v = VisitedSet()
    v.add(1)
    v.add(1)
    v.add("x")
    assert 1 in v and "x" in v and 2 not in v and len(v) == 2
