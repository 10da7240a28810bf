"""Beam search over an implicit graph, minimizing a fitness function.

The same routine drives k-nearest-neighbor queries (fitness is the distance
to the query) and the hyper-parameter optimizer (fitness is a cost computed
for a configuration). The compiled kernels in ``_kernels`` replicate this
function for the vector case and are tested against it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Hashable, Iterable, Sequence

import numpy as np

from .errors import UsageError
from .metric import MetricKind, VectorDataset
from .pqueue import BoundedResultSet


@dataclass(frozen=True)
class BeamParams:
    bsize: int
    delta: float
    maxvisits: int

    def __post_init__(self):
        if self.bsize < 1:
            raise UsageError(f"bsize must be >= 1, got {self.bsize}")
        if not self.delta >= 0:
            raise UsageError(f"delta must be non-negative, got {self.delta}")
        if self.maxvisits < 1:
            raise UsageError(f"maxvisits must be >= 1, got {self.maxvisits}")


class VisitedSet:
    """Membership record over node identifiers, reusable across searches."""

    __slots__ = ("_seen",)

    def __init__(self):
        self._seen: set = set()

    def add(self, node: Hashable):
        self._seen.add(node)

    def __contains__(self, node) -> bool:
        return node in self._seen

    def __len__(self) -> int:
        return len(self._seen)

    def clear(self):
        self._seen.clear()


@dataclass
class SearchResult:
    neighbors: BoundedResultSet
    visits: int

    @property
    def ids(self) -> list:
        return self.neighbors.ids

    @property
    def scores(self) -> list[float]:
        return self.neighbors.scores


def beam_search(
    fitness: Callable[[Hashable], float],
    neighbors_of: Callable[[Hashable], Iterable[Hashable]],
    seeds: Sequence[Hashable],
    k: int,
    params: BeamParams,
    *,
    results: BoundedResultSet | None = None,
    visited: VisitedSet | None = None,
) -> SearchResult:
    """Find the ``k`` nodes with the smallest fitness reachable from ``seeds``.

    ``results`` may be supplied by callers whose neighborhood function needs
    to observe the result set while the search runs; it must be empty and
    have capacity ``k``. The search stops as soon as ``params.maxvisits``
    distinct nodes have been evaluated, including the seeds.
    """
    if len(seeds) == 0:
        raise UsageError("beam search needs at least one seed")
    if results is None:
        results = BoundedResultSet(k)
    elif results.capacity != k or len(results):
        raise UsageError("results must be an empty set of capacity k")
    if visited is None:
        visited = VisitedSet()
    else:
        visited.clear()
    beam = BoundedResultSet(params.bsize)
    maxvisits = params.maxvisits
    delta = params.delta
    visits = 0

    for s in seeds:
        if s in visited:
            continue
        visited.add(s)
        results.push(fitness(s), s)
        visits += 1
        if visits >= maxvisits:
            return SearchResult(results, visits)

    beam.push(results.minimum(), results.argmin())
    while beam:
        _, p = beam.popmin()
        for c in neighbors_of(p):
            if c in visited:
                continue
            visited.add(c)
            score = fitness(c)
            results.push(score, c)
            visits += 1
            if visits >= maxvisits:
                return SearchResult(results, visits)
            if score <= delta * results.maximum():
                beam.push(score, c)
    return SearchResult(results, visits)


class KnnFitness:
    """Distance from a fixed query to dataset rows, counting evaluations."""

    def __init__(self, query, dataset: VectorDataset):
        q = np.asarray(query, dtype=np.float64).reshape(-1)
        if q.shape[0] != dataset.dim:
            raise UsageError(f"query dimension {q.shape[0]} does not match dataset dimension {dataset.dim}")
        if not np.isfinite(q).all():
            raise UsageError("query must be finite")
        self.query = q
        self.dataset = dataset
        self.evaluations = 0
        self._cosine = dataset.metric is MetricKind.NORMALIZED_COSINE

    def __call__(self, id) -> float:
        self.evaluations += 1
        x = self.dataset.data[id].astype(np.float64)
        if self._cosine:
            return min(2.0, max(0.0, 1.0 - float(x @ self.query)))
        d = x - self.query
        return float(np.sqrt(d @ d))


def knn_fitness(query, dataset: VectorDataset) -> KnnFitness:
    return KnnFitness(query, dataset)
