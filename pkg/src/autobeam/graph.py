"""Incrementally built neighbor graph answering k-NN queries with beam search.

Each inserted element searches the current graph for its ``ceil(log_b n)``
approximate nearest neighbors, keeps the SAT-reduced subset as its forward
list, and is appended to the list of each kept neighbor. Once the graph holds
``block_size`` elements, insertions proceed in blocks: every element of a
block is searched against the graph as it stood before the block (in worker
threads), then the adjacency is written by a single writer in id order.

Search parameters and the seed set ("hints") are refreshed whenever
``should_reoptimize`` fires for the current size.
"""

from __future__ import annotations

import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import _kernels as K
from .beam import SearchResult
from .config import DEFAULT_CONFIG, Configuration
from .errors import UsageError
from .metric import VectorDataset, distance
from .pqueue import BoundedResultSet

log = logging.getLogger(__name__)

DEFAULT_BLOCK_SIZE = 1024
DEFAULT_LOG_BASE = 1.2
HINT_SCAN_FACTOR = 8


def neighborhood_size(n: int, b: float) -> int:
    if n < 1 or not b > 1:
        raise UsageError(f"need n >= 1 and b > 1, got n={n}, b={b}")
    return max(1, K.ceil_log(n, b))


def should_reoptimize(i: int, b: float) -> bool:
    """True when the graph size ``i`` sits right before a unit step of ``ceil(log_b i)``."""
    if i < 1:
        raise UsageError(f"i must be >= 1, got {i}")
    return K.ceil_log(i, b) + 1 == K.ceil_log(i + 1, b)


def reoptimization_points(n: int, b: float) -> list[int]:
    """All sizes ``i < n`` at which a build of ``n`` elements reoptimizes."""
    out = []
    prev = K.ceil_log(1, b)
    for i in range(1, n):
        cur = K.ceil_log(i + 1, b)
        if prev + 1 == cur:
            out.append(i)
        prev = cur
    return out


def sat_reduce(center: int, candidates: Sequence[int], dataset: VectorDataset) -> list[int]:
    """Keep each candidate only if the center is closer to it than any kept one.

    ``candidates`` must be ordered by ascending distance to ``center``.
    """
    if len(candidates) == 0:
        return []
    metric = dataset.metric
    c = dataset[center]
    dists = [distance(metric, c, dataset[x]) for x in candidates]
    if any(dists[j] > dists[j + 1] for j in range(len(dists) - 1)):
        raise UsageError("candidates must be sorted by distance to the center")
    kept = [candidates[0]]
    for x, dcx in zip(candidates[1:], dists[1:]):
        if all(distance(metric, dataset[v], dataset[x]) > dcx for v in kept):
            kept.append(x)
    return kept


@dataclass
class BuildStats:
    insertions: int = 0
    reoptimizations: int = 0
    build_visits: int = 0
    gold_computations: int = 0
    optimize_seconds: float = 0.0


Tuner = Callable[["SearchGraph"], Configuration]


class SearchGraph:
    """Neighbor graph over a prefix of ``dataset``.

    Only the first ``len(self)`` rows of the dataset are indexed; the rest are
    waiting to be inserted with :meth:`insert_one`, :meth:`append_batch` or
    :meth:`extend`.
    """

    def __init__(
        self,
        dataset: VectorDataset,
        log_base: float = DEFAULT_LOG_BASE,
        search_params: Configuration = DEFAULT_CONFIG,
        *,
        tuner: Tuner | None = None,
        block_size: int = DEFAULT_BLOCK_SIZE,
        seed: int | np.random.SeedSequence = 0,
    ):
        if not 1.0 < log_base:
            raise UsageError(f"log base must be > 1, got {log_base}")
        if block_size < 1:
            raise UsageError(f"block size must be positive, got {block_size}")
        self.dataset = dataset
        self.log_base = float(log_base)
        self.search_params = search_params
        self.tuner = tuner
        self.block_size = int(block_size)
        self.stats = BuildStats()
        self.hints = np.zeros(0, dtype=np.int32)
        self._rng = np.random.default_rng(seed)
        cap = dataset.count
        self._pool = np.empty(max(16, 8 * cap), dtype=np.int32)
        self._used = np.zeros(1, dtype=np.int64)
        self._start = np.zeros(cap, dtype=np.int64)
        self._cap = np.zeros(cap, dtype=np.int32)
        self._deg = np.zeros(cap, dtype=np.int32)
        self._n = 0

    # -- inspection -----------------------------------------------------

    def __len__(self) -> int:
        return self._n

    @property
    def metric_code(self) -> int:
        return int(self.dataset.metric)

    def neighbors(self, u: int) -> np.ndarray:
        if not 0 <= u < self._n:
            raise UsageError(f"node {u} is not indexed")
        s = self._start[u]
        return self._pool[s:s + self._deg[u]]

    def adjacency(self) -> list[np.ndarray]:
        return [self.neighbors(u).copy() for u in range(self._n)]

    def degrees(self) -> np.ndarray:
        return self._deg[: self._n].copy()

    def to_csr(self) -> tuple[np.ndarray, np.ndarray]:
        deg = self._deg[: self._n].astype(np.int64)
        offsets = np.zeros(self._n + 1, dtype=np.int64)
        np.cumsum(deg, out=offsets[1:])
        ids = np.empty(int(offsets[-1]), dtype=np.int32)
        for u in range(self._n):
            ids[offsets[u]:offsets[u + 1]] = self.neighbors(u)
        return offsets, ids

    def memory_bytes(self, include_dataset: bool = True) -> int:
        index = int(self._deg[: self._n].sum()) * 4 + (self._n + 1) * 8 + self.hints.nbytes
        if include_dataset:
            index += self._n * self.dataset.dim * 4
        return index

    # -- construction ---------------------------------------------------

    @classmethod
    def from_adjacency(
        cls,
        dataset: VectorDataset,
        lists: Sequence[Sequence[int]],
        hints: Sequence[int],
        log_base: float = DEFAULT_LOG_BASE,
        search_params: Configuration = DEFAULT_CONFIG,
        **kwargs,
    ) -> SearchGraph:
        """Wrap explicit adjacency lists (e.g. a loaded index or a test fixture)."""
        g = cls(dataset, log_base, search_params, **kwargs)
        n = len(lists)
        if n > dataset.count:
            raise UsageError("more adjacency lists than dataset rows")
        for u, row in enumerate(lists):
            row = np.asarray(row, dtype=np.int32)
            if row.size and (row.min() < 0 or row.max() >= n):
                raise UsageError(f"adjacency list of {u} references a missing node")
            g._pool = K.adj_set(g._pool, g._start, g._cap, g._deg, g._used, u, row, row.size)
        g._n = n
        g.hints = np.asarray(hints, dtype=np.int32)
        if n and (g.hints.size == 0 or g.hints.min() < 0 or g.hints.max() >= n):
            raise UsageError("hints must be non-empty indexed ids")
        return g

    def _check_next(self, first: int, count: int):
        if first != self._n:
            raise UsageError(f"expected next id {self._n}, got {first}")
        if first + count > self.dataset.count:
            raise UsageError("ids beyond the end of the dataset")

    def insert_one(self, id: int) -> None:
        """Insert dataset row ``id``; it must be the next unindexed row."""
        self._check_next(id, 1)
        self._insert_sequential(id + 1)
        self._maybe_reoptimize(id)

    def _insert_sequential(self, hi: int):
        lo = self._n
        if lo == 0:
            self.hints = np.zeros(1, dtype=np.int32)
        p = self.search_params
        self._pool, visits = K.insert_range(
            self.dataset.data, self.metric_code, self._pool, self._start, self._cap, self._deg,
            self._used, self.hints, lo, hi, self.log_base, p.bsize, p.delta, K.NO_LIMIT,
        )
        self._n = hi
        self.stats.insertions += hi - lo
        self.stats.build_visits += int(visits)

    def append_batch(self, ids: Sequence[int], workers: int = 1) -> None:
        """Insert a contiguous block of ids searched against the pre-block graph.

        While the graph is smaller than ``block_size`` the block is inserted
        sequentially instead.
        """
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size == 0:
            return
        if ids.size > 1 and not np.all(np.diff(ids) == 1):
            raise UsageError("batch ids must be contiguous")
        lo, hi = int(ids[0]), int(ids[-1]) + 1
        self._check_next(lo, hi - lo)
        if hi - lo > self.block_size:
            raise UsageError(f"batch of {hi - lo} exceeds block size {self.block_size}")
        if lo < self.block_size:
            self._insert_sequential(hi)
        else:
            self._insert_block(lo, hi, workers)
        self._maybe_reoptimize(lo)

    def _insert_block(self, lo: int, hi: int, workers: int):
        p = self.search_params
        k = neighborhood_size(lo, self.log_base)
        m = hi - lo
        out_ids = np.empty((m, k), dtype=np.int32)
        out_cnt = np.zeros(m, dtype=np.int32)
        out_visits = np.zeros(m, dtype=np.int64)
        args = (self.dataset.data, self.metric_code, self._pool, self._start, self._deg, lo,
                self.hints)
        tail = (k, p.bsize, p.delta, K.NO_LIMIT, out_ids, out_cnt, out_visits, lo)
        workers = max(1, min(int(workers), m))
        if workers == 1:
            K.search_block(*args, lo, hi, *tail)
        else:
            bounds = np.linspace(lo, hi, workers + 1).astype(np.int64)
            with ThreadPoolExecutor(max_workers=workers) as pool:
                jobs = [pool.submit(K.search_block, *args, int(a), int(b), *tail)
                        for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
                for job in jobs:
                    job.result()
        # single writer: forward lists, then reverse links in id order
        self._pool = K.commit_block(self._pool, self._start, self._cap, self._deg, self._used,
                                    lo, hi, out_ids, out_cnt)
        self._n = hi
        self.stats.insertions += m
        self.stats.build_visits += int(out_visits.sum())

    def extend(self, until: int | None = None, workers: int | None = None,
               sequential: bool = False, progress: Callable[[int], None] | None = None) -> None:
        """Index dataset rows up to ``until`` (default: all of them)."""
        until = self.dataset.count if until is None else int(until)
        if until > self.dataset.count:
            raise UsageError("cannot index beyond the dataset")
        if workers is None:
            workers = os.cpu_count() or 1
        events = iter(e for e in reoptimization_points(until + 1, self.log_base) if e > self._n)
        next_event = next(events, None)
        while self._n < until:
            stop = until if next_event is None else min(until, next_event)
            if sequential or self._n < self.block_size:
                if not sequential:
                    stop = min(stop, self.block_size)
                self._insert_sequential(stop)
            else:
                stop = min(stop, self._n + self.block_size)
                self._insert_block(self._n, stop, workers)
            if self._n == next_event:
                self._reoptimize()
                next_event = next(events, None)
            if progress is not None:
                progress(self._n)

    def _maybe_reoptimize(self, before: int):
        # one refresh even if several event sizes fall inside the inserted range
        if any(should_reoptimize(i, self.log_base) for i in range(before + 1, self._n + 1)):
            self._reoptimize()

    def _reoptimize(self):
        self.stats.reoptimizations += 1
        self.hints = np.asarray(self.select_hints(), dtype=np.int32)
        if self.tuner is not None:
            t0 = time.perf_counter()
            self.search_params = self.tuner(self)
            self.stats.optimize_seconds += time.perf_counter() - t0
            log.debug("n=%d tuned to %r", self._n, self.search_params)

    def select_hints(self) -> list[int]:
        """Sample seeds whose adjacency lists are pairwise disjoint.

        Scans a random sample of at most ``8 * ceil(log_b n)`` nodes and
        returns what it found if the target size was not reached.
        """
        n = self._n
        if n == 0:
            raise UsageError("empty graph has no hints")
        target = max(1, min(n, K.ceil_log(n, self.log_base)))
        budget = min(n, HINT_SCAN_FACTOR * target)
        candidates = self._rng.choice(n, size=budget, replace=False)
        covered = np.zeros(n, dtype=bool)
        hints = []
        for u in candidates:
            nb = self.neighbors(int(u))
            if covered[nb].any():
                continue
            covered[nb] = True
            hints.append(int(u))
            if len(hints) == target:
                break
        return hints

    # -- queries --------------------------------------------------------

    def _params(self, bsize, delta, maxvisits):
        p = self.search_params
        bsize = p.bsize if bsize is None else int(bsize)
        delta = p.delta if delta is None else float(delta)
        maxvisits = K.NO_LIMIT if maxvisits is None else int(maxvisits)
        if bsize < 1 or maxvisits < 1 or not delta >= 0:
            raise UsageError("invalid search parameters")
        return bsize, delta, maxvisits

    def _check_queries(self, queries) -> np.ndarray:
        if self._n == 0:
            raise UsageError("cannot search an empty graph")
        q = np.ascontiguousarray(queries, dtype=np.float32)
        if q.ndim == 1:
            q = q[None, :]
        if q.shape[1] != self.dataset.dim:
            raise UsageError(f"query dimension {q.shape[1]} does not match {self.dataset.dim}")
        return q

    def search_batch(self, queries, k: int, *, bsize: int | None = None,
                     delta: float | None = None, maxvisits: int | None = None):
        """Search every row of ``queries``.

        Returns ``(ids, dists, counts, visits)``; row ``j`` of ``ids``/``dists``
        is valid up to ``counts[j]`` and padded with -1/inf beyond.
        """
        q = self._check_queries(queries)
        if k < 1:
            raise UsageError("k must be positive")
        bsize, delta, maxvisits = self._params(bsize, delta, maxvisits)
        m = q.shape[0]
        ids = np.full((m, k), -1, dtype=np.int32)
        dists = np.full((m, k), np.inf, dtype=np.float64)
        counts = np.zeros(m, dtype=np.int64)
        visits = np.zeros(m, dtype=np.int64)
        if m:
            K.search_batch(self.dataset.data, self.metric_code, q, self._pool, self._start,
                           self._deg, self._n, self.hints, k, bsize, delta, maxvisits,
                           ids, dists, counts, visits)
        return ids, dists, counts, visits

    def search(self, query, k: int, *, bsize: int | None = None, delta: float | None = None,
               maxvisits: int | None = None) -> SearchResult:
        ids, dists, counts, visits = self.search_batch(
            query, k, bsize=bsize, delta=delta, maxvisits=maxvisits)
        c = int(counts[0])
        res = BoundedResultSet.from_sorted(k, dists[0, :c], ids[0, :c].tolist())
        return SearchResult(res, int(visits[0]))


def insert_one(graph: SearchGraph, id: int) -> SearchGraph:
    graph.insert_one(id)
    return graph


def append_batch(graph: SearchGraph, ids: Sequence[int], workers: int = 1) -> SearchGraph:
    graph.append_batch(ids, workers)
    return graph


def select_hints(graph: SearchGraph) -> list[int]:
    return graph.select_hints()


def search(graph: SearchGraph, query, k: int) -> SearchResult:
    return graph.search(query, k)


def degree_summary(graph: SearchGraph) -> dict[str, float]:
    deg = graph.degrees()
    if deg.size == 0:
        return {}
    q1, med, q3 = np.percentile(deg, [25, 50, 75])
    return {"mean": float(deg.mean()), "min": int(deg.min()), "q1": float(q1),
            "median": float(med), "q3": float(q3), "max": int(deg.max())}
