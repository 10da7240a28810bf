"""Vector storage and distance functions.

Cosine datasets are normalized once at ingestion so the distance reduces to
``1 - dot(u, v)`` in the hot loops.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError, UsageError

UNIT_NORM_TOL = 1e-5


class MetricKind(enum.IntEnum):
    L2 = 0
    NORMALIZED_COSINE = 1

    @classmethod
    def parse(cls, name: str | int | MetricKind) -> MetricKind:
        if isinstance(name, MetricKind):
            return name
        if isinstance(name, int):
            return cls(name)
        key = name.strip().lower()
        if key in ("l2", "euclidean"):
            return cls.L2
        if key in ("cos", "cosine", "normalized-cosine", "normalized_cosine"):
            return cls.NORMALIZED_COSINE
        raise UsageError(f"unknown metric {name!r}; expected 'l2' or 'cosine'")

    @property
    def label(self) -> str:
        return "l2" if self is MetricKind.L2 else "cosine"


@dataclass(frozen=True, eq=False)
class VectorDataset:
    """Fixed-dimension float32 vectors stored row-major in one block."""

    data: np.ndarray
    metric: MetricKind = MetricKind.L2

    def __post_init__(self):
        data = self.data
        if data.ndim != 2:
            raise DataError(f"expected a 2-d array, got shape {data.shape}")
        if data.shape[1] < 1:
            raise DataError("dimension must be at least 1")
        if data.flags.writeable or data.dtype != np.float32 or not data.flags.c_contiguous:
            data = np.array(data, dtype=np.float32, order="C", copy=True)
            object.__setattr__(self, "data", data)
        object.__setattr__(self, "metric", MetricKind.parse(self.metric))
        if data.size:
            bad = ~np.isfinite(data).all(axis=1)
            if bad.any():
                raise DataError(f"row {int(np.argmax(bad))} has non-finite values")
        if self.metric is MetricKind.NORMALIZED_COSINE and len(data):
            norms = np.linalg.norm(data.astype(np.float64), axis=1)
            off = np.abs(norms - 1.0) > UNIT_NORM_TOL
            if off.any():
                row = int(np.argmax(off))
                raise DataError(f"row {row} is not unit-norm (|x|={norms[row]:.6g}); normalize first")
        data.flags.writeable = False

    @classmethod
    def from_array(cls, array, metric: MetricKind | str = MetricKind.L2) -> VectorDataset:
        """Build a dataset, normalizing rows first when the metric is cosine."""
        metric = MetricKind.parse(metric)
        data = np.array(array, dtype=np.float32, copy=True, ndmin=2)
        if metric is MetricKind.NORMALIZED_COSINE:
            data = _normalized_rows(data)
        return cls(data, metric)

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    @property
    def count(self) -> int:
        return self.data.shape[0]

    def __len__(self) -> int:
        return self.data.shape[0]

    def __getitem__(self, i):
        return self.data[i]

    @property
    def nbytes(self) -> int:
        return self.data.nbytes


def _normalized_rows(data: np.ndarray) -> np.ndarray:
    wide = data.astype(np.float64)
    norms = np.linalg.norm(wide, axis=1)
    zero = norms == 0.0
    if zero.any():
        raise DataError(f"row {int(np.argmax(zero))} is a zero vector and cannot be normalized")
    return (wide / norms[:, None]).astype(np.float32)


def normalize_in_place(dataset: VectorDataset) -> VectorDataset:
    """Return ``dataset`` with unit-norm rows.

    L2 datasets are returned unchanged. The stored array is immutable, so the
    "in place" result is a new dataset sharing nothing with the input.
    """
    if dataset.metric is MetricKind.L2:
        return dataset
    return VectorDataset(_normalized_rows(dataset.data), dataset.metric)


def normalize_rows(array: np.ndarray) -> np.ndarray:
    return _normalized_rows(np.asarray(array, dtype=np.float32).reshape(len(array), -1))


def _check_pair(u: np.ndarray, v: np.ndarray):
    if u.shape != v.shape or u.ndim != 1:
        raise UsageError(f"dimension mismatch: {u.shape} vs {v.shape}")
    if not (np.isfinite(u).all() and np.isfinite(v).all()):
        raise UsageError("distance arguments must be finite")


def distance(metric: MetricKind | str, u, v) -> float:
    metric = MetricKind.parse(metric)
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    _check_pair(u, v)
    if metric is MetricKind.L2:
        diff = u - v
        return math.sqrt(float(diff @ diff))
    return min(2.0, max(0.0, 1.0 - float(u @ v)))


def distances_to(metric: MetricKind, query: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Distances from one query to many rows, float64, no validation."""
    q = np.asarray(query, dtype=np.float64)
    x = np.asarray(rows, dtype=np.float64)
    if metric is MetricKind.L2:
        diff = x - q
        return np.sqrt(np.einsum("ij,ij->i", diff, diff))
    return np.clip(1.0 - x @ q, 0.0, 2.0)
