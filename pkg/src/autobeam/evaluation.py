"""Exhaustive gold standards, recall, and timed benchmark runs."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .errors import UsageError
from .metric import VectorDataset, distances_to

if TYPE_CHECKING:
    from .graph import SearchGraph

DEFAULT_K = 32


def _k_smallest(d: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` smallest entries, ties broken by index."""
    n = d.shape[0]
    if k < n:
        cut = np.partition(d, k - 1)[k - 1]
        cand = np.flatnonzero(d <= cut)
    else:
        cand = np.arange(n)
    order = np.lexsort((cand, d[cand]))
    return cand[order[:k]]


def brute_force_knn(dataset: VectorDataset, query, k: int, n: int | None = None) -> np.ndarray:
    """Exact ``k`` nearest ids among the first ``n`` rows, ascending by distance."""
    if k < 1:
        raise UsageError("k must be positive")
    n = dataset.count if n is None else n
    if n == 0:
        raise UsageError("cannot search an empty dataset")
    q = np.asarray(query, dtype=np.float32).reshape(-1)
    if q.shape[0] != dataset.dim:
        raise UsageError(f"query dimension {q.shape[0]} does not match {dataset.dim}")
    d = distances_to(dataset.metric, q, dataset.data[:n])
    return _k_smallest(d, min(k, n)).astype(np.int32)


def brute_force_batch(dataset: VectorDataset, queries, k: int, n: int | None = None) -> np.ndarray:
    """Gold standard for every row of ``queries`` as an ``(m, min(k, n))`` array."""
    queries = np.asarray(queries, dtype=np.float32)
    n = dataset.count if n is None else n
    if queries.size == 0:
        return np.zeros((0, min(k, n)), dtype=np.int32)
    rows = dataset.data[:n].astype(np.float64)
    out = np.empty((len(queries), min(k, n)), dtype=np.int32)
    for j, q in enumerate(queries):
        if q.shape[0] != dataset.dim:
            raise UsageError(f"query dimension {q.shape[0]} does not match {dataset.dim}")
        out[j] = _k_smallest(distances_to(dataset.metric, q, rows), min(k, n))
    return out


@dataclass
class GoldStandard:
    ids: np.ndarray
    k: int

    def __len__(self) -> int:
        return len(self.ids)

    @classmethod
    def compute(cls, dataset: VectorDataset, queries, k: int = DEFAULT_K) -> GoldStandard:
        ids = brute_force_batch(dataset, queries, k)
        return cls(ids, ids.shape[1])


def recall(result_ids, gold_ids, k: int | None = None) -> float:
    gold = set(np.asarray(gold_ids).tolist())
    k = len(gold) if k is None else k
    if k == 0:
        raise UsageError("recall needs k >= 1")
    return len(set(np.asarray(result_ids).tolist()) & gold) / k


@dataclass
class QueryRecord:
    recall: float
    visits: int


@dataclass
class BenchReport:
    macro_recall: float | None
    qps: float
    mean_visits: float | None
    search_seconds: float
    build_seconds: float
    memory_bytes: int
    index_memory_bytes: int
    k: int
    n: int
    m: int
    config: dict
    per_query: list[QueryRecord] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


BENCH_REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["macro_recall", "qps", "mean_visits", "build_seconds", "memory_bytes",
                 "k", "n", "m", "config", "per_query"],
    "properties": {
        "macro_recall": {"type": ["number", "null"], "minimum": 0, "maximum": 1},
        "qps": {"type": "number", "minimum": 0},
        "mean_visits": {"type": ["number", "null"], "minimum": 0},
        "search_seconds": {"type": "number", "minimum": 0},
        "build_seconds": {"type": "number", "minimum": 0},
        "memory_bytes": {"type": "integer", "minimum": 0},
        "index_memory_bytes": {"type": "integer", "minimum": 0},
        "k": {"type": "integer", "minimum": 1},
        "n": {"type": "integer", "minimum": 0},
        "m": {"type": "integer", "minimum": 0},
        "config": {
            "type": "object",
            "required": ["bsize", "delta"],
            "properties": {"bsize": {"type": "integer"}, "delta": {"type": "number"}},
        },
        "per_query": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["recall", "visits"],
                "properties": {"recall": {"type": "number"}, "visits": {"type": "integer"}},
            },
        },
    },
}


def run_benchmark(graph: SearchGraph, queries, gold, k: int = DEFAULT_K, *,
                  build_seconds: float = 0.0, maxvisits: int | None = None,
                  workers: int = 1) -> BenchReport:
    """Time all queries on one thread and score them against ``gold``."""
    queries = np.asarray(queries, dtype=np.float32)
    gold = np.asarray(gold)
    m = len(queries)
    if len(gold) != m:
        raise UsageError(f"{m} queries but {len(gold)} gold lists")
    if m and gold.shape[1] != min(k, len(graph)):
        raise UsageError(f"gold lists have {gold.shape[1]} ids, expected k={k}")
    if workers != 1:
        raise UsageError("benchmarks run on a single worker")
    p = graph.search_params
    report = BenchReport(None, 0.0, None, 0.0, float(build_seconds), graph.memory_bytes(),
                         graph.memory_bytes(include_dataset=False), k, len(graph), m,
                         {"bsize": p.bsize, "delta": p.delta})
    if m == 0:
        return report
    t0 = time.perf_counter()
    ids, _, counts, visits = graph.search_batch(queries, k, maxvisits=maxvisits)
    elapsed = time.perf_counter() - t0
    recs = [QueryRecord(recall(ids[j, : counts[j]], gold[j], gold.shape[1]), int(visits[j]))
            for j in range(m)]
    report.per_query = recs
    report.macro_recall = float(np.mean([r.recall for r in recs]))
    report.mean_visits = float(visits.mean())
    report.search_seconds = elapsed
    report.qps = m / elapsed if elapsed > 0 else float("inf")
    return report
