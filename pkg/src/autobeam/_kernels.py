"""Compiled hot paths for graph construction and k-NN search.

Adjacency lists live in a single int32 ``pool``; node ``u`` owns the slice
``pool[start[u]:start[u] + cap[u]]`` of which the first ``deg[u]`` entries
are valid. A full list is moved to a fresh region of twice the capacity at
the end of the pool, so appends are amortized O(1) and the pool only grows.

Everything here mirrors the pure-Python reference code in ``beam`` and
``pqueue``; the test suite checks the two against each other.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

METRIC_L2 = 0
METRIC_COSINE = 1
NO_LIMIT = np.iinfo(np.int64).max


def _ceil_log(n, b):
    if n <= 1:
        return 0
    x = math.log(n) / math.log(b)
    r = math.floor(x + 0.5)
    if abs(x - r) < 1e-9:
        return int(r)
    return int(math.ceil(x))


ceil_log = _ceil_log
ceil_log_nb = njit(cache=True)(_ceil_log)


@njit(cache=True)
def nsize(n, b):
    return max(1, ceil_log_nb(n, b))


@njit(cache=True, nogil=True)
def dist(metric, u, v):
    acc = 0.0
    if metric == METRIC_L2:
        for t in range(u.shape[0]):
            d = np.float64(u[t]) - np.float64(v[t])
            acc += d * d
        return math.sqrt(acc)
    for t in range(u.shape[0]):
        acc += np.float64(u[t]) * np.float64(v[t])
    r = 1.0 - acc
    if r < 0.0:
        return 0.0
    if r > 2.0:
        return 2.0
    return r


@njit(cache=True, nogil=True)
def queue_push(scores, ids, front, end, cap, score, item):
    """Bounded sorted push; returns (accepted, front, end)."""
    if end - front == cap:
        if score > scores[end - 1]:
            return False, front, end
        end -= 1
    if end == scores.shape[0]:
        n = end - front
        for t in range(n):
            scores[t] = scores[front + t]
            ids[t] = ids[front + t]
        front = 0
        end = n
    pos = end
    while pos > front and scores[pos - 1] > score:
        scores[pos] = scores[pos - 1]
        ids[pos] = ids[pos - 1]
        pos -= 1
    scores[pos] = score
    ids[pos] = item
    return True, front, end + 1


@njit(cache=True, nogil=True)
def search_knn(data, metric, q, pool, start, deg, seeds, k, bsize, delta, maxvisits,
               stamps, stamp, rs, ri, bs, bi):
    """Beam search for the ``k`` nearest rows of ``data`` to ``q``.

    Results land in ``rs[:n]``/``ri[:n]``; returns ``(n, visits)``.
    ``stamps[u] == stamp`` marks ``u`` as visited.
    """
    rn = 0
    visits = 0
    for s in seeds:
        if stamps[s] == stamp:
            continue
        stamps[s] = stamp
        d = dist(metric, q, data[s])
        _, _, rn = queue_push(rs, ri, 0, rn, k, d, s)
        visits += 1
        if visits >= maxvisits:
            return rn, visits
    bf = 0
    be = 0
    _, bf, be = queue_push(bs, bi, bf, be, bsize, rs[0], ri[0])
    while be > bf:
        p = bi[bf]
        bf += 1
        if bf == be:
            bf = 0
            be = 0
        st = start[p]
        for t in range(deg[p]):
            c = pool[st + t]
            if stamps[c] == stamp:
                continue
            stamps[c] = stamp
            d = dist(metric, q, data[c])
            _, _, rn = queue_push(rs, ri, 0, rn, k, d, c)
            visits += 1
            if visits >= maxvisits:
                return rn, visits
            if d <= delta * rs[rn - 1]:
                _, bf, be = queue_push(bs, bi, bf, be, bsize, d, c)
    return rn, visits


@njit(cache=True, nogil=True)
def search_batch(data, metric, queries, pool, start, deg, n, seeds, k, bsize, delta,
                 maxvisits, out_ids, out_d, out_n, out_visits):
    """Run ``search_knn`` for every row of ``queries`` over the first ``n`` nodes."""
    stamps = np.zeros(n, dtype=np.int32)
    rs = np.empty(k, dtype=np.float64)
    ri = np.empty(k, dtype=np.int32)
    bs = np.empty(bsize, dtype=np.float64)
    bi = np.empty(bsize, dtype=np.int32)
    q = np.empty(queries.shape[1], dtype=np.float64)
    for j in range(queries.shape[0]):
        for t in range(q.shape[0]):
            q[t] = queries[j, t]
        rn, visits = search_knn(data, metric, q, pool, start, deg, seeds, k, bsize, delta,
                                maxvisits, stamps, j + 1, rs, ri, bs, bi)
        out_n[j] = rn
        out_visits[j] = visits
        for t in range(rn):
            out_ids[j, t] = ri[t]
            out_d[j, t] = rs[t]


@njit(cache=True, nogil=True)
def sat_reduce(data, metric, ids, dists, n, out):
    """Keep ``ids[j]`` iff it is closer to the center than to every kept id.

    ``dists`` holds the center distances, ascending. Returns the kept count.
    """
    if n == 0:
        return 0
    out[0] = ids[0]
    m = 1
    for j in range(1, n):
        x = ids[j]
        dcx = dists[j]
        keep = True
        for t in range(m):
            if dist(metric, data[out[t]], data[x]) <= dcx:
                keep = False
                break
        if keep:
            out[m] = x
            m += 1
    return m


@njit(cache=True, nogil=True)
def _reserve(pool, used, need):
    if used[0] + need > pool.shape[0]:
        size = max(used[0] + need, 2 * pool.shape[0])
        grown = np.empty(size, dtype=np.int32)
        grown[: used[0]] = pool[: used[0]]
        pool = grown
    s = used[0]
    used[0] += need
    return pool, s


@njit(cache=True, nogil=True)
def adj_set(pool, start, cap, deg, used, u, items, m):
    c = max(4, 2 * m)
    pool, s = _reserve(pool, used, c)
    for t in range(m):
        pool[s + t] = items[t]
    start[u] = s
    cap[u] = c
    deg[u] = m
    return pool


@njit(cache=True, nogil=True)
def adj_append(pool, start, cap, deg, used, u, v):
    if deg[u] == cap[u]:
        c = max(4, 2 * cap[u])
        pool, s = _reserve(pool, used, c)
        old = start[u]
        for t in range(deg[u]):
            pool[s + t] = pool[old + t]
        start[u] = s
        cap[u] = c
    pool[start[u] + deg[u]] = v
    deg[u] += 1
    return pool


@njit(cache=True, nogil=True)
def insert_range(data, metric, pool, start, cap, deg, used, hints, lo, hi, logb,
                 bsize, delta, maxvisits):
    """Sequentially insert rows ``lo..hi-1``; returns ``(pool, visits)``."""
    kmax = nsize(max(hi - 1, 1), logb)
    rs = np.empty(kmax, dtype=np.float64)
    ri = np.empty(kmax, dtype=np.int32)
    bs = np.empty(bsize, dtype=np.float64)
    bi = np.empty(bsize, dtype=np.int32)
    kept = np.empty(kmax, dtype=np.int32)
    stamps = np.zeros(max(hi, 1), dtype=np.int32)
    q = np.empty(data.shape[1], dtype=np.float64)
    total = 0
    for i in range(lo, hi):
        if i == 0:
            pool = adj_set(pool, start, cap, deg, used, 0, kept, 0)
            continue
        k = nsize(i, logb)
        for t in range(q.shape[0]):
            q[t] = data[i, t]
        rn, visits = search_knn(data, metric, q, pool, start, deg, hints, k, bsize, delta,
                                maxvisits, stamps, i - lo + 1, rs, ri, bs, bi)
        total += visits
        m = sat_reduce(data, metric, ri, rs, rn, kept)
        pool = adj_set(pool, start, cap, deg, used, i, kept, m)
        for t in range(m):
            pool = adj_append(pool, start, cap, deg, used, kept[t], i)
    return pool, total


@njit(cache=True, nogil=True)
def search_block(data, metric, pool, start, deg, n, hints, lo, hi, k, bsize, delta,
                 maxvisits, out_ids, out_cnt, out_visits, row0):
    """Search and SAT-reduce rows ``lo..hi-1`` against the frozen first ``n`` nodes.

    Writes row ``i`` of the outcome at ``out_*[i - row0]``; never mutates the graph.
    """
    rs = np.empty(k, dtype=np.float64)
    ri = np.empty(k, dtype=np.int32)
    bs = np.empty(bsize, dtype=np.float64)
    bi = np.empty(bsize, dtype=np.int32)
    kept = np.empty(k, dtype=np.int32)
    stamps = np.zeros(n, dtype=np.int32)
    q = np.empty(data.shape[1], dtype=np.float64)
    for i in range(lo, hi):
        for t in range(q.shape[0]):
            q[t] = data[i, t]
        rn, visits = search_knn(data, metric, q, pool, start, deg, hints, k, bsize, delta,
                                maxvisits, stamps, i - lo + 1, rs, ri, bs, bi)
        m = sat_reduce(data, metric, ri, rs, rn, kept)
        j = i - row0
        out_cnt[j] = m
        out_visits[j] = visits
        for t in range(m):
            out_ids[j, t] = kept[t]


@njit(cache=True, nogil=True)
def commit_block(pool, start, cap, deg, used, lo, hi, out_ids, out_cnt):
    """Write forward lists for a searched block, then its reverse links in id order."""
    for i in range(lo, hi):
        pool = adj_set(pool, start, cap, deg, used, i, out_ids[i - lo], out_cnt[i - lo])
    for i in range(lo, hi):
        row = out_ids[i - lo]
        for t in range(out_cnt[i - lo]):
            pool = adj_append(pool, start, cap, deg, used, row[t], i)
    return pool
