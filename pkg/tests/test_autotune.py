import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from autobeam.autotune import (Autotuner, FitnessKind, OptimizerSettings, TuningContext,
                               build_index, config_neighborhood, crossover, eval_min_recall,
                               eval_pareto_radius, eval_pareto_recall, evaluator, initial_maxvisits,
                               min_recall_value, mutate, optimize, pareto_radius_value,
                               pareto_recall_value, rand_config, search_configurations)
from autobeam.config import Configuration
from autobeam.errors import UsageError
from autobeam.evaluation import brute_force_batch, recall
from autobeam.graph import SearchGraph

from conftest import build_graph, make_dataset


class FixedDraws:
    """Stands in for a Generator whose ``random()`` returns a fixed value."""

    def __init__(self, value):
        self.value = value

    def random(self):
        return self.value


GROW, SHRINK = FixedDraws(0.0), FixedDraws(0.99)


@pytest.fixture(scope="module")
def graph_1k():
    return build_graph(1000, 8, seed=21)


def context(graph, seed=0, gold=True, maxvisits=1000, **kw):
    s = OptimizerSettings(**kw)
    return TuningContext.sample(graph, s, np.random.default_rng(seed), maxvisits, gold), s


# -- operators ----------------------------------------------------------------

def test_rand_config_covers_grid():
    s = OptimizerSettings()
    rng = np.random.default_rng(0)
    draws = [rand_config(s, rng) for _ in range(10_000)]
    assert {c.bsize for c in draws} == set(s.rand_bsize_grid)
    assert {c.delta for c in draws} == set(s.rand_delta_grid)
    assert all(8 <= c.bsize <= 64 for c in draws)
    again = [rand_config(s, np.random.default_rng(0)) for _ in range(1)]
    assert again[0] == draws[0]


def test_mutate_examples():
    s = OptimizerSettings()
    assert mutate(Configuration(512, 2.0), s, GROW).key == (512, 2.0)
    assert mutate(Configuration(2, 0.6), s, SHRINK).key == (2, 0.6)
    assert mutate(Configuration(32, 1.0), s, GROW).key == (48, 1.07)
    m = mutate(Configuration(32, 1.0), s, SHRINK)
    assert m.bsize == math.ceil(32 / 1.5) and m.delta == pytest.approx(1 / 1.07)


def test_crossover_examples():
    assert crossover(Configuration(8, 0.8), Configuration(64, 1.2)).key == (36, 1.0)
    c = Configuration(17, 0.93)
    assert crossover(c, c).bsize == 17 and crossover(c, c).delta == c.delta
    x = crossover(Configuration(3, 0.9), Configuration(4, 1.0))
    assert x.bsize == 4 and x.delta == pytest.approx(0.95)


def test_neighborhood_size_and_bounds():
    s = OptimizerSettings()
    rng = np.random.default_rng(1)
    pool = [Configuration(8, 0.8), Configuration(300, 1.9), Configuration(2, 0.6)]
    out = config_neighborhood(Configuration(500, 1.95), pool, s, rng)
    assert len(out) <= 24
    assert all(2 <= c.bsize <= 512 and 0.6 <= c.delta <= 2.0 for c in out)


def test_neighborhood_of_single_item_beam():
    s = OptimizerSettings()
    x = Configuration(24, 1.1)
    out = config_neighborhood(Configuration(32, 1.0), [x], s, np.random.default_rng(2))
    assert out[s.gamma:] == [x] * s.delta_count
    with pytest.raises(UsageError):
        config_neighborhood(x, [], s, np.random.default_rng(2))


def test_mutation_direction_frequencies():
    s = OptimizerSettings()
    rng = np.random.default_rng(3)
    c = Configuration(32, 1.0)
    up_b = up_d = total = 0
    for _ in range(1000):
        for m in config_neighborhood(c, [c], s, rng)[: s.gamma]:
            up_b += m.bsize > 32
            up_d += m.delta > 1.0
            total += 1
    assert abs(up_b / total - 0.8) <= 0.05
    assert abs(up_d / total - 0.8) <= 0.05


@settings(max_examples=300, deadline=None)
@given(st.integers(2, 512), st.floats(0.6, 2.0), st.integers(2, 512), st.floats(0.6, 2.0),
       st.integers(0, 2**32 - 1))
def test_operators_respect_bounds(b1, d1, b2, d2, seed):
    s = OptimizerSettings()
    c1, c2 = Configuration(b1, d1), Configuration(b2, d2)
    for c in (mutate(c1, s, np.random.default_rng(seed)), crossover(c1, c2)):
        assert 2 <= c.bsize <= 512 and 0.6 <= c.delta <= 2.0


def test_configuration_key_rounds_delta():
    assert Configuration(8, 1.00001) == Configuration(8, 1.0)
    assert Configuration(8, 1.0001) != Configuration(8, 1.0)
    assert len({Configuration(8, 0.95), Configuration(8, 0.95000001)}) == 1
    with pytest.raises(UsageError):
        Configuration(1, 1.0)
    with pytest.raises(UsageError):
        Configuration(8, 2.5)


def test_settings_validation():
    with pytest.raises(UsageError):
        OptimizerSettings(p=1.0)
    with pytest.raises(UsageError):
        OptimizerSettings(alpha=1.0)
    with pytest.raises(UsageError):
        OptimizerSettings(rand_bsize_grid=(1, 8))


# -- fitness ------------------------------------------------------------------

def test_formula_corner_values():
    assert pareto_recall_value(1000, 1000, 1.0) == 1.0
    assert pareto_recall_value(0, 1000, 0.0) == 1.0
    assert min_recall_value(300, 1000, 0.9, 0.9) == 0.3
    assert min_recall_value(300, 1000, 0.5, 0.9) == 2.0


@settings(max_examples=300, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 10), st.floats(1e-3, 10))
def test_bi_objective_values_in_range(v, r, radius, max_radius):
    assert 0 <= pareto_recall_value(v, 1, r) <= 2
    assert 0 <= pareto_radius_value(v, 1, radius, max_radius) <= 2


def test_pareto_recall_matches_log_recomputation(graph_1k):
    ctx, _ = context(graph_1k)
    value = eval_pareto_recall(Configuration(32, 1.0), graph_1k, ctx)
    m = ctx.log[-1]
    visits = sum(m.visits) / len(m.visits)
    rec = sum(m.recall) / len(m.recall)
    assert value == pytest.approx((visits / ctx.maxvisits) ** 2 + (1 - rec) ** 2, rel=1e-12)
    # per-query recall recomputed independently from a fresh search
    ids, _, counts, _ = graph_1k.search_batch(graph_1k.dataset.data[ctx.queries], ctx.k,
                                              bsize=32, delta=1.0, maxvisits=ctx.maxvisits)
    gold = brute_force_batch(graph_1k.dataset, graph_1k.dataset.data[ctx.queries], ctx.k)
    np.testing.assert_allclose(m.recall, [recall(ids[j, : counts[j]], gold[j]) for j in range(len(ids))])


def test_pareto_radius_first_evaluation_self_normalizes(graph_1k):
    ctx, _ = context(graph_1k, gold=False)
    assert ctx.gold is None
    c = Configuration(16, 1.0)
    first = eval_pareto_radius(c, graph_1k, ctx)
    m = ctx.log[-1]
    assert first == pytest.approx(m.mean_visits / ctx.maxvisits + 1.0)
    assert ctx.max_radius_estimate == m.avg_radius
    c2 = Configuration(40, 1.1)
    a = eval_pareto_radius(c2, graph_1k, ctx)
    b = eval_pareto_radius(c2, graph_1k, ctx)
    assert a == b
    m = ctx.log[-1]
    radii = list(m.radius)
    expect = (sum(m.visits) / len(m.visits)) / ctx.maxvisits + min(
        1.0, sum(radii) / len(radii) / ctx.max_radius_estimate)
    assert a == pytest.approx(expect, rel=1e-12)


def test_radius_is_kth_distance(graph_1k):
    ctx, _ = context(graph_1k, gold=False)
    eval_pareto_radius(Configuration(64, 1.5), graph_1k, ctx)
    m = ctx.log[-1]
    q = graph_1k.dataset.data[ctx.queries]
    _, dists, counts, _ = graph_1k.search_batch(q, ctx.k, bsize=64, delta=1.5,
                                                maxvisits=ctx.maxvisits)
    np.testing.assert_array_equal(m.radius, dists[:, ctx.k - 1])


def test_recall_fitness_needs_gold(graph_1k):
    ctx, s = context(graph_1k, gold=False)
    with pytest.raises(UsageError):
        eval_pareto_recall(Configuration(8, 1.0), graph_1k, ctx)
    with pytest.raises(UsageError):
        eval_min_recall(Configuration(8, 1.0), graph_1k, ctx, s)


def test_min_recall_orders_grid(graph_1k):
    ctx, s = context(graph_1k, target=FitnessKind.MIN_RECALL, min_recall=0.9)
    scored = []
    for b in (2, 4, 8, 16, 32, 64):
        for d in (0.6, 0.8, 1.0, 1.2, 1.5, 2.0):
            v = eval_min_recall(Configuration(b, d), graph_1k, ctx, s)
            scored.append((ctx.log[-1].macro_recall >= 0.9, v))
    good = [v for ok, v in scored if ok]
    bad = [v for ok, v in scored if not ok]
    assert good and bad
    assert max(good) <= 1 <= min(bad)
    assert max(good) < min(bad)


# -- optimizer ------------------------------------------------------------------

def test_initial_maxvisits():
    s = OptimizerSettings()
    assert initial_maxvisits(100, s) == 1000
    assert initial_maxvisits(50_000, s) == math.ceil(math.log(50_000) ** 3)


def test_tuning_context_sample(graph_1k):
    ctx, _ = context(graph_1k)
    assert len(ctx.queries) == 32 == len(set(ctx.queries.tolist()))
    assert ctx.gold.shape == (32, 32)
    small = build_graph(10, 3)
    ctx, _ = context(small)
    assert sorted(ctx.queries.tolist()) == list(range(10)) and ctx.k == 10


def test_optimize_on_single_element_graph():
    g = SearchGraph(make_dataset(1, 4))
    g.insert_one(0)
    c = optimize(g, OptimizerSettings(), seed=0)
    assert isinstance(c, Configuration) and g.search_params is c


def test_optimizer_never_repeats_a_configuration(graph_1k):
    ctx, s = context(graph_1k)
    seen = Counter()
    fit = evaluator(graph_1k, ctx, s)

    def counting(c):
        seen[c.key] += 1
        return fit(c)

    res = search_configurations(counting, s, np.random.default_rng(4))
    assert max(seen.values()) == 1
    assert res.visits == sum(seen.values()) <= s.max_evaluations


@pytest.mark.parametrize("kind", [FitnessKind.PARETO_RECALL, FitnessKind.MIN_RECALL])
def test_optimizer_beats_random_search_baseline(graph_1k, kind):
    ctx, s = context(graph_1k, seed=5, target=kind)
    fit = evaluator(graph_1k, ctx, s)
    best = search_configurations(fit, s, np.random.default_rng(6)).neighbors.minimum()
    rng = np.random.default_rng(7)
    cache = {}
    for _ in range(200):
        c = rand_config(s, rng)
        if c not in cache:
            cache[c] = fit(c)
    assert best <= min(cache.values()) * 1.05


def test_optimize_is_deterministic(graph_1k):
    s = OptimizerSettings(target=FitnessKind.PARETO_RECALL)
    graph_1k.search_params = Configuration(32, 1.0)
    a = Autotuner(s, seed=9).optimize(graph_1k)
    graph_1k.search_params = Configuration(32, 1.0)
    b = Autotuner(s, seed=9).optimize(graph_1k)
    assert a.config.key == b.config.key and a.score == b.score
    graph_1k.search_params = Configuration(32, 1.0)


def test_maxvisits_doubles_previous_best(graph_1k):
    tuner = Autotuner(OptimizerSettings(), seed=1)
    first = tuner.optimize(graph_1k)
    second = tuner.optimize(graph_1k)
    assert second.maxvisits == math.ceil(2 * first.mean_visits)
    graph_1k.search_params = Configuration(32, 1.0)


def test_min_recall_tuning_reaches_target():
    ds = make_dataset(10_000, 8, seed=31)
    s = OptimizerSettings(target=FitnessKind.MIN_RECALL, min_recall=0.9)
    g = build_index(ds, 1.2, s, seed=3, workers=1)
    last = g.tuner.history[-1]
    assert last.train_recall >= 0.9
    assert g.search_params == last.config
    assert g.stats.gold_computations == g.stats.reoptimizations


def test_pareto_radius_build_computes_no_gold():
    ds = make_dataset(5000, 8, seed=32)
    g = build_index(ds, 1.2, OptimizerSettings(target=FitnessKind.PARETO_RADIUS), seed=1, workers=1)
    assert g.stats.reoptimizations > 0
    assert g.stats.gold_computations == 0
    assert all(h.train_recall is None for h in g.tuner.history)
