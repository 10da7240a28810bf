"""Automatic selection of (bsize, delta) with beam search over configurations.

The configuration space is navigated with the same ``beam_search`` used for
k-NN queries. A configuration's neighborhood is made of random mutations
(each coordinate scaled up with probability ``p``, down otherwise) plus
crossovers of configurations currently in the result set. Fitness is one of
three cost functions measured by running a small sample of indexed elements
as queries against the graph.
"""

from __future__ import annotations

import enum
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _kernels
from .beam import BeamParams, SearchResult, beam_search
from .config import BSIZE_MAX, BSIZE_MIN, DELTA_MAX, DELTA_MIN, Configuration
from .errors import UsageError
from .evaluation import brute_force_batch
from .graph import DEFAULT_BLOCK_SIZE, DEFAULT_LOG_BASE, SearchGraph
from .metric import VectorDataset
from .pqueue import BoundedResultSet

log = logging.getLogger(__name__)

RECALL_EPS = 1e-12


class FitnessKind(enum.Enum):
    PARETO_RECALL = "pareto-recall"
    PARETO_RADIUS = "pareto-radius"
    MIN_RECALL = "min-recall"

    @property
    def needs_gold(self) -> bool:
        return self is not FitnessKind.PARETO_RADIUS


@dataclass(frozen=True)
class OptimizerSettings:
    target: FitnessKind = FitnessKind.PARETO_RECALL
    min_recall: float = 0.9
    alpha: float = 1.5
    beta: float = 1.07
    p: float = 0.8
    gamma: int = 16
    delta_count: int = 8
    opt_bsize: int = 3
    opt_delta: float = 1.0
    rand_bsize_grid: tuple[int, ...] = (8, 16, 24, 32, 40, 48, 56, 64)
    rand_delta_grid: tuple[float, ...] = (0.8, 0.9, 1.0, 1.1)
    tuning_query_count: int = 32
    k: int = 32
    initial_population: int = 32
    max_evaluations: int = 48
    min_initial_maxvisits: int = 1000

    def __post_init__(self):
        object.__setattr__(self, "target", FitnessKind(self.target))
        if not 0 < self.p < 1:
            raise UsageError("p must lie in (0, 1)")
        if not (self.alpha > 1 and self.beta > 1):
            raise UsageError("alpha and beta must exceed 1")
        if not 0 < self.min_recall <= 1:
            raise UsageError("min_recall must lie in (0, 1]")
        if any(not BSIZE_MIN <= b <= BSIZE_MAX for b in self.rand_bsize_grid):
            raise UsageError("bsize grid outside configuration bounds")
        if any(not DELTA_MIN <= d <= DELTA_MAX for d in self.rand_delta_grid):
            raise UsageError("delta grid outside configuration bounds")
        for name in ("gamma", "opt_bsize", "tuning_query_count", "k", "initial_population",
                     "max_evaluations"):
            if getattr(self, name) < 1:
                raise UsageError(f"{name} must be positive")


# -- genetic operators ------------------------------------------------------

def rand_config(settings: OptimizerSettings, rng: np.random.Generator) -> Configuration:
    bsize = settings.rand_bsize_grid[rng.integers(len(settings.rand_bsize_grid))]
    delta = settings.rand_delta_grid[rng.integers(len(settings.rand_delta_grid))]
    return Configuration(int(bsize), float(delta))


def scale(value: float, factor: float, grow: bool) -> float:
    return value * factor if grow else value / factor


def mutate(c: Configuration, settings: OptimizerSettings, rng: np.random.Generator) -> Configuration:
    grow_b = rng.random() < settings.p
    grow_d = rng.random() < settings.p
    return Configuration.clamped(scale(c.bsize, settings.alpha, grow_b),
                                 scale(c.delta, settings.beta, grow_d))


def crossover(c1: Configuration, c2: Configuration) -> Configuration:
    return Configuration.clamped(math.ceil((c1.bsize + c2.bsize) / 2), (c1.delta + c2.delta) / 2)


def config_neighborhood(c: Configuration, beam_contents, settings: OptimizerSettings,
                        rng: np.random.Generator) -> list[Configuration]:
    pool = list(beam_contents)
    if not pool:
        raise UsageError("beam contents must not be empty")
    out = [mutate(c, settings, rng) for _ in range(settings.gamma)]
    for _ in range(settings.delta_count):
        if len(pool) == 1:
            a = b = pool[0]
        else:
            i, j = rng.choice(len(pool), size=2, replace=False)
            a, b = pool[i], pool[j]
        out.append(crossover(a, b))
    return out


# -- fitness ----------------------------------------------------------------

@dataclass
class Measurement:
    config: Configuration
    visits: np.ndarray
    radius: np.ndarray
    recall: np.ndarray | None

    @property
    def mean_visits(self) -> float:
        return float(self.visits.mean())

    @property
    def macro_recall(self) -> float:
        return float(self.recall.mean())

    @property
    def avg_radius(self) -> float:
        return float(self.radius.mean())


@dataclass
class TuningContext:
    queries: np.ndarray
    maxvisits: int
    k: int
    gold: np.ndarray | None = None
    max_radius_estimate: float | None = None
    log: list[Measurement] = field(default_factory=list)

    @classmethod
    def sample(cls, graph: SearchGraph, settings: OptimizerSettings, rng: np.random.Generator,
               maxvisits: int, with_gold: bool) -> TuningContext:
        n = len(graph)
        if n == 0:
            raise UsageError("cannot tune an empty graph")
        m = min(settings.tuning_query_count, n)
        queries = np.sort(rng.choice(n, size=m, replace=False)).astype(np.int64)
        k = min(settings.k, n)
        ctx = cls(queries, int(maxvisits), k)
        if with_gold:
            ctx.gold = brute_force_batch(graph.dataset, graph.dataset.data[queries], k, n=n)
            graph.stats.gold_computations += 1
        return ctx


def initial_maxvisits(n: int, settings: OptimizerSettings) -> int:
    return max(settings.min_initial_maxvisits, math.ceil(math.log(max(n, 2)) ** 3))


def measure(c: Configuration, graph: SearchGraph, ctx: TuningContext) -> Measurement:
    """Run every tuning query with ``c`` and record per-query costs."""
    vecs = graph.dataset.data[ctx.queries]
    ids, dists, counts, visits = graph.search_batch(vecs, ctx.k, bsize=c.bsize, delta=c.delta,
                                                    maxvisits=ctx.maxvisits)
    radius = dists[np.arange(len(counts)), counts - 1]
    recall = None
    if ctx.gold is not None:
        recall = np.array([
            len(set(ids[j, : counts[j]].tolist()) & set(ctx.gold[j].tolist())) / ctx.k
            for j in range(len(counts))
        ])
    m = Measurement(c, visits.astype(np.float64), radius, recall)
    ctx.log.append(m)
    return m


def _require_gold(ctx: TuningContext):
    if ctx.gold is None:
        raise UsageError("this fitness needs a gold standard in the tuning context")


def pareto_recall_value(mean_visits: float, maxvisits: int, recall: float) -> float:
    return (mean_visits / maxvisits) ** 2 + (1.0 - recall) ** 2


def pareto_radius_value(mean_visits: float, maxvisits: int, avg_radius: float,
                        max_radius: float) -> float:
    if max_radius > 0:
        ratio = min(1.0, avg_radius / max_radius)
    else:
        ratio = 0.0 if avg_radius == 0 else 1.0
    return mean_visits / maxvisits + ratio


def min_recall_value(mean_visits: float, maxvisits: int, recall: float, min_recall: float) -> float:
    if recall < min_recall - RECALL_EPS:
        return 3.0 - 2.0 * recall
    return mean_visits / maxvisits


def eval_pareto_recall(c: Configuration, graph: SearchGraph, ctx: TuningContext) -> float:
    _require_gold(ctx)
    m = measure(c, graph, ctx)
    return pareto_recall_value(m.mean_visits, ctx.maxvisits, m.macro_recall)


def eval_pareto_radius(c: Configuration, graph: SearchGraph, ctx: TuningContext) -> float:
    m = measure(c, graph, ctx)
    if ctx.max_radius_estimate is None:
        # the first evaluation of a procedure fixes the normalizer
        ctx.max_radius_estimate = m.avg_radius
        return m.mean_visits / ctx.maxvisits + 1.0
    return pareto_radius_value(m.mean_visits, ctx.maxvisits, m.avg_radius,
                               ctx.max_radius_estimate)


def eval_min_recall(c: Configuration, graph: SearchGraph, ctx: TuningContext,
                    settings: OptimizerSettings) -> float:
    _require_gold(ctx)
    m = measure(c, graph, ctx)
    return min_recall_value(m.mean_visits, ctx.maxvisits, m.macro_recall, settings.min_recall)


def evaluator(graph: SearchGraph, ctx: TuningContext, settings: OptimizerSettings):
    kind = settings.target
    if kind is FitnessKind.PARETO_RECALL:
        return lambda c: eval_pareto_recall(c, graph, ctx)
    if kind is FitnessKind.PARETO_RADIUS:
        return lambda c: eval_pareto_radius(c, graph, ctx)
    return lambda c: eval_min_recall(c, graph, ctx, settings)


# -- optimizer ----------------------------------------------------------------

def search_configurations(fitness: Callable[[Configuration], float], settings: OptimizerSettings,
                          rng: np.random.Generator) -> SearchResult:
    """Beam search over the configuration graph, seeded with random configurations."""
    s = settings
    seeds: list[Configuration] = []
    target = min(s.initial_population, len(s.rand_bsize_grid) * len(s.rand_delta_grid))
    while len(seeds) < target:
        c = rand_config(s, rng)
        if c not in seeds:
            seeds.append(c)
    results = BoundedResultSet(s.opt_bsize)

    def neighbors_of(c):
        return config_neighborhood(c, results.ids, s, rng)

    params = BeamParams(s.opt_bsize, s.opt_delta, s.max_evaluations)
    return beam_search(fitness, neighbors_of, seeds, s.opt_bsize, params, results=results)


@dataclass
class TuningOutcome:
    config: Configuration
    score: float
    mean_visits: float
    train_recall: float | None
    maxvisits: int
    evaluations: int
    seconds: float


class Autotuner:
    """Stateful optimizer installed as a graph's tuner during construction.

    The ``maxvisits`` cap of each procedure is twice the mean visits of the
    previous procedure's winner, so the state persists across calls.
    """

    def __init__(self, settings: OptimizerSettings | None = None,
                 seed: int | np.random.SeedSequence = 0):
        self.settings = settings or OptimizerSettings()
        self.rng = np.random.default_rng(seed)
        self.previous_visits: float | None = None
        self.history: list[TuningOutcome] = []

    def __call__(self, graph: SearchGraph) -> Configuration:
        return self.optimize(graph).config

    def optimize(self, graph: SearchGraph) -> TuningOutcome:
        t0 = time.perf_counter()
        s = self.settings
        n = len(graph)
        ctx = TuningContext.sample(graph, s, self.rng, initial_maxvisits(n, s),
                                   s.target.needs_gold)
        if self.previous_visits is None and n > 1:
            # a fresh tuner treats the installed configuration as the previous best
            probe = TuningContext(ctx.queries, _kernels.NO_LIMIT, ctx.k)
            self.previous_visits = measure(graph.search_params, graph, probe).mean_visits
            ctx.maxvisits = max(ctx.maxvisits, math.ceil(2 * self.previous_visits))
        elif self.previous_visits is not None:
            ctx.maxvisits = max(1, math.ceil(2 * self.previous_visits))
        maxvisits = ctx.maxvisits
        res = search_configurations(evaluator(graph, ctx, s), s, self.rng)
        best = res.neighbors.argmin()
        m = next(x for x in ctx.log if x.config == best)
        self.previous_visits = m.mean_visits
        graph.search_params = best
        outcome = TuningOutcome(
            config=best,
            score=res.neighbors.minimum(),
            mean_visits=m.mean_visits,
            train_recall=None if m.recall is None else m.macro_recall,
            maxvisits=maxvisits,
            evaluations=res.visits,
            seconds=time.perf_counter() - t0,
        )
        self.history.append(outcome)
        log.debug("n=%d best=%r score=%.4f visits=%.1f", n, best, outcome.score, m.mean_visits)
        return outcome


def optimize(graph: SearchGraph, settings: OptimizerSettings | None = None,
             seed: int | np.random.SeedSequence = 0) -> Configuration:
    """One-shot tuning of ``graph.search_params``; returns the installed configuration."""
    return Autotuner(settings, seed).optimize(graph).config


def build_index(
    dataset: VectorDataset,
    log_base: float = DEFAULT_LOG_BASE,
    settings: OptimizerSettings | None = None,
    *,
    seed: int | np.random.SeedSequence = 0,
    block_size: int = DEFAULT_BLOCK_SIZE,
    workers: int | None = None,
    sequential: bool = False,
    until: int | None = None,
) -> SearchGraph:
    """Build a self-tuning index over all of ``dataset``."""
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    hint_seed, tune_seed = root.spawn(2)
    tuner = Autotuner(settings, tune_seed)
    graph = SearchGraph(dataset, log_base, tuner=tuner, block_size=block_size, seed=hint_seed)
    graph.extend(until=until, workers=workers, sequential=sequential)
    return graph
