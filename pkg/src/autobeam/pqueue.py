"""Size-bounded min-max priority queue.

Pairs are kept in one array sorted by score; a front pointer absorbs
``popmin`` so both extremes are O(1). Insertion is insertion-sort placement
after any equal scores, which makes iteration order stable for ties.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from typing import Any, Hashable, Iterator

from .errors import UsageError

UNBOUNDED = math.inf


class BoundedResultSet:
    __slots__ = ("capacity", "_scores", "_ids", "_front")

    def __init__(self, capacity: int):
        if capacity < 1:
            raise UsageError(f"capacity must be positive, got {capacity}")
        self.capacity = int(capacity)
        self._scores: list[float] = []
        self._ids: list[Any] = []
        self._front = 0

    @classmethod
    def from_sorted(cls, capacity: int, scores, ids) -> BoundedResultSet:
        res = cls(capacity)
        res._scores = [float(s) for s in scores]
        res._ids = list(ids)
        if len(res._scores) > capacity:
            raise UsageError("more items than capacity")
        return res

    def __len__(self) -> int:
        return len(self._scores) - self._front

    def __bool__(self) -> bool:
        return len(self._scores) > self._front

    def __iter__(self) -> Iterator[tuple[float, Any]]:
        return zip(self._scores[self._front:], self._ids[self._front:])

    def __repr__(self) -> str:
        return f"BoundedResultSet(capacity={self.capacity}, items={list(self)})"

    def is_full(self) -> bool:
        return len(self) == self.capacity

    def _compact(self):
        if self._front:
            del self._scores[: self._front]
            del self._ids[: self._front]
            self._front = 0

    def push(self, score: float, id: Hashable) -> bool:
        size = len(self)
        scores = self._scores
        if size == self.capacity:
            if score > scores[-1]:
                return False
            scores.pop()
            self._ids.pop()
        if self._front and self._front >= len(scores) // 2:
            self._compact()
        pos = len(scores)
        if pos > self._front and scores[pos - 1] > score:
            pos = bisect_right(scores, score, self._front)
        scores.insert(pos, score)
        self._ids.insert(pos, id)
        return True

    def _require_items(self):
        if not self:
            raise UsageError("empty result set")

    def popmin(self) -> tuple[float, Any]:
        self._require_items()
        i = self._front
        pair = (self._scores[i], self._ids[i])
        self._front += 1
        if self._front == len(self._scores):
            self.clear()
        return pair

    def popmax(self) -> tuple[float, Any]:
        self._require_items()
        pair = (self._scores.pop(), self._ids.pop())
        if self._front == len(self._scores):
            self.clear()
        return pair

    def minimum(self) -> float:
        self._require_items()
        return self._scores[self._front]

    def maximum(self) -> float:
        self._require_items()
        return self._scores[-1]

    def argmin(self) -> Any:
        self._require_items()
        return self._ids[self._front]

    def argmax(self) -> Any:
        self._require_items()
        return self._ids[-1]

    def covering_radius(self) -> float:
        """Score of the worst kept item once full, ``UNBOUNDED`` before that."""
        if len(self) < self.capacity:
            return UNBOUNDED
        return self._scores[-1]

    def clear(self):
        self._scores.clear()
        self._ids.clear()
        self._front = 0

    @property
    def ids(self) -> list:
        return self._ids[self._front:]

    @property
    def scores(self) -> list[float]:
        return self._scores[self._front:]
