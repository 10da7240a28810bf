"""Vector files (fvecs, ivecs, raw float32) and index persistence.

fvecs/ivecs records are ``[dim: int32][dim values]``, all little-endian.

The index file is a fixed little-endian header followed by payloads::

    magic     8 bytes  b"AGRAPH01"
    version   uint32
    dim       uint32
    count     uint32   indexed elements
    metric    uint8    0 = L2, 1 = cosine
    log_base  float64
    delta     float64
    bsize     uint32
    vectors   count * dim float32
    offsets   (count + 1) uint64      adjacency in CSR layout
    ids       offsets[count] uint32
    n_hints   uint32
    hints     n_hints uint32
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

from .config import Configuration
from .errors import DataError, UsageError
from .graph import SearchGraph
from .metric import MetricKind, VectorDataset, normalize_rows

MAGIC = b"AGRAPH01"
VERSION = 1
HEADER = struct.Struct("<8sIIIBddI")

FORMATS = ("fvecs", "ivecs", "raw-f32")


def _read_records(path, value_dtype: str) -> np.ndarray:
    raw = Path(path).read_bytes()
    if not raw:
        return np.zeros((0, 0), dtype=value_dtype)
    if len(raw) < 4:
        raise DataError(f"{path}: truncated record header at byte offset 0")
    dim = int(np.frombuffer(raw, "<i4", count=1)[0])
    if dim < 1:
        raise DataError(f"{path}: invalid dimension {dim} at byte offset 0")
    rec = 4 * (dim + 1)
    full = len(raw) // rec
    words = np.frombuffer(raw, "<i4", count=full * (dim + 1)).reshape(full, dim + 1)
    bad = np.flatnonzero(words[:, 0] != dim)
    if bad.size:
        r = int(bad[0])
        raise DataError(f"{path}: record at byte offset {r * rec} has dimension "
                        f"{int(words[r, 0])}, expected {dim}")
    if len(raw) % rec:
        raise DataError(f"{path}: truncated record at byte offset {full * rec} "
                        f"({len(raw) - full * rec} of {rec} bytes)")
    values = np.frombuffer(raw, value_dtype, count=full * (dim + 1)).reshape(full, dim + 1)
    return values[:, 1:].copy()


def read_fvecs(path) -> np.ndarray:
    return _read_records(path, "<f4").astype(np.float32, copy=False)


def read_ivecs(path) -> np.ndarray:
    return _read_records(path, "<i4").astype(np.int32, copy=False)


def _write_records(path, array: np.ndarray, value_dtype: str):
    array = np.asarray(array)
    if array.size == 0:
        Path(path).write_bytes(b"")
        return
    if array.ndim != 2:
        raise UsageError("expected a 2-d array")
    m, dim = array.shape
    out = np.empty((m, dim + 1), dtype=value_dtype)
    out[:, 1:] = array
    out.view("<i4")[:, 0] = dim
    with open(path, "wb") as f:
        f.write(out.tobytes())


def write_fvecs(path, array):
    _write_records(path, np.asarray(array, dtype=np.float32), "<f4")


def write_ivecs(path, array):
    _write_records(path, np.asarray(array, dtype=np.int32), "<i4")


def read_raw_f32(path, dim: int, count: int) -> np.ndarray:
    if dim is None or count is None:
        raise UsageError("raw-f32 input needs --dim and --count")
    raw = Path(path).read_bytes()
    if len(raw) != 4 * dim * count:
        raise DataError(f"{path}: expected {4 * dim * count} bytes for {count}x{dim} float32, "
                        f"found {len(raw)}")
    return np.frombuffer(raw, "<f4").reshape(count, dim).astype(np.float32)


def read_matrix(path, fmt: str = "fvecs", dim: int | None = None,
                count: int | None = None) -> np.ndarray:
    if fmt == "fvecs":
        return read_fvecs(path)
    if fmt == "ivecs":
        return read_ivecs(path).astype(np.float32)
    if fmt == "raw-f32":
        return read_raw_f32(path, dim, count)
    raise UsageError(f"unknown vector format {fmt!r}; expected one of {FORMATS}")


def read_vectors(path, fmt: str = "fvecs", metric: MetricKind | str = MetricKind.L2,
                 dim: int | None = None, count: int | None = None) -> VectorDataset:
    """Load a dataset; cosine datasets are normalized on the way in."""
    data = read_matrix(path, fmt, dim, count)
    if data.size == 0:
        raise DataError(f"{path}: no vectors")
    metric = MetricKind.parse(metric)
    if metric is MetricKind.NORMALIZED_COSINE:
        data = normalize_rows(data)
    bad = ~np.isfinite(data).all(axis=1)
    if bad.any():
        r = int(np.argmax(bad))
        raise DataError(f"{path}: non-finite value in record {r} "
                        f"(byte offset {r * 4 * (data.shape[1] + 1)})")
    return VectorDataset(data, metric)


def read_queries(path, metric: MetricKind | str = MetricKind.L2, fmt: str = "fvecs",
                 dim: int | None = None, count: int | None = None) -> np.ndarray:
    """Like :func:`read_vectors` but an empty file yields an empty matrix."""
    data = read_matrix(path, fmt, dim, count)
    if data.size and MetricKind.parse(metric) is MetricKind.NORMALIZED_COSINE:
        data = normalize_rows(data)
    return data


# -- index files ------------------------------------------------------------

def index_bytes(graph: SearchGraph) -> bytes:
    n = len(graph)
    ds = graph.dataset
    p = graph.search_params
    offsets, ids = graph.to_csr()
    parts = [
        HEADER.pack(MAGIC, VERSION, ds.dim, n, int(ds.metric), graph.log_base, p.delta, p.bsize),
        ds.data[:n].astype("<f4").tobytes(),
        offsets.astype("<u8").tobytes(),
        ids.astype("<u4").tobytes(),
        struct.pack("<I", len(graph.hints)),
        graph.hints.astype("<u4").tobytes(),
    ]
    return b"".join(parts)


def save_index(graph: SearchGraph, path) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as f:
        f.write(index_bytes(graph))
    os.replace(tmp, path)


class _Reader:
    def __init__(self, buf: bytes, path):
        self.buf = buf
        self.pos = 0
        self.path = path

    def take(self, nbytes: int, what: str) -> bytes:
        if self.pos + nbytes > len(self.buf):
            raise DataError(f"{self.path}: truncated {what} at byte offset {self.pos}")
        out = self.buf[self.pos:self.pos + nbytes]
        self.pos += nbytes
        return out

    def array(self, dtype: str, count: int, what: str) -> np.ndarray:
        size = np.dtype(dtype).itemsize
        return np.frombuffer(self.take(size * count, what), dtype=dtype)


def load_index(path, **graph_kwargs) -> SearchGraph:
    buf = Path(path).read_bytes()
    r = _Reader(buf, path)
    magic, version, dim, n, metric, log_base, delta, bsize = HEADER.unpack(
        r.take(HEADER.size, "header"))
    if magic != MAGIC:
        raise DataError(f"{path}: not an index file (bad magic {magic!r})")
    if version != VERSION:
        raise DataError(f"{path}: unsupported index version {version}")
    try:
        metric = MetricKind(metric)
        config = Configuration(bsize, delta)
    except (ValueError, UsageError) as exc:
        raise DataError(f"{path}: corrupt header: {exc}") from None
    data = r.array("<f4", n * dim, "vectors").reshape(n, dim).astype(np.float32)
    offsets = r.array("<u8", n + 1, "offsets").astype(np.int64)
    if offsets[0] != 0 or np.any(np.diff(offsets) < 0):
        raise DataError(f"{path}: corrupt adjacency offsets")
    ids = r.array("<u4", int(offsets[-1]), "adjacency").astype(np.int32)
    (n_hints,) = struct.unpack("<I", r.take(4, "hint count"))
    hints = r.array("<u4", n_hints, "hints").astype(np.int32)
    if r.pos != len(buf):
        raise DataError(f"{path}: {len(buf) - r.pos} trailing bytes after byte offset {r.pos}")
    if ids.size and int(ids.max()) >= n:
        raise DataError(f"{path}: adjacency references node {int(ids.max())} >= {n}")
    try:
        dataset = VectorDataset(data, metric)
        lists = [ids[offsets[u]:offsets[u + 1]] for u in range(n)]
        return SearchGraph.from_adjacency(dataset, lists, hints, log_base, config, **graph_kwargs)
    except UsageError as exc:
        raise DataError(f"{path}: {exc}") from None
