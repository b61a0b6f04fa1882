"""Hot numeric kernels: exact k-NN scans and fingerprint popcounts.

Every kernel has a loop implementation (compiled with numba when available)
and a vectorised numpy implementation. The public names dispatch on
:data:`molcyclegan._accel.HAVE_NUMBA`; both variants stay importable so the
benchmark and the equivalence tests can run them side by side.
"""
import numpy as np

from ._accel import HAVE_NUMBA, njit

_INT64_MAX = np.iinfo(np.int64).max


# --- k nearest neighbours -------------------------------------------------

@njit
def _knn_scan_loop(table, queries, k, tie_rank):
    n, dim = table.shape
    nq = queries.shape[0]
    out_idx = np.empty((nq, k), dtype=np.int64)
    out_d2 = np.empty((nq, k), dtype=np.float64)
    for q in range(nq):
        best_d = np.full(k, np.inf)
        best_r = np.full(k, _INT64_MAX, dtype=np.int64)
        best_i = np.full(k, -1, dtype=np.int64)
        for i in range(n):
            d2 = 0.0
            for j in range(dim):
                t = table[i, j] - queries[q, j]
                d2 += t * t
            r = tie_rank[i]
            last = k - 1
            if d2 > best_d[last] or (d2 == best_d[last] and r >= best_r[last]):
                continue
            pos = last
            while pos > 0 and (d2 < best_d[pos - 1] or (d2 == best_d[pos - 1] and r < best_r[pos - 1])):
                best_d[pos] = best_d[pos - 1]
                best_r[pos] = best_r[pos - 1]
                best_i[pos] = best_i[pos - 1]
                pos -= 1
            best_d[pos] = d2
            best_r[pos] = r
            best_i[pos] = i
        out_idx[q] = best_i
        out_d2[q] = best_d
    return out_idx, out_d2


def _knn_scan_numpy(table, queries, k, tie_rank):
    nq = queries.shape[0]
    out_idx = np.empty((nq, k), dtype=np.int64)
    out_d2 = np.empty((nq, k), dtype=np.float64)
    for q in range(nq):
        diff = table - queries[q]
        d2 = np.einsum("ij,ij->i", diff, diff)
        if k < len(d2):
            kth = np.partition(d2, k - 1)[k - 1]
            cand = np.flatnonzero(d2 <= kth)
        else:
            cand = np.arange(len(d2))
        order = np.lexsort((tie_rank[cand], d2[cand]))[:k]
        out_idx[q] = cand[order]
        out_d2[q] = d2[cand[order]]
    return out_idx, out_d2


def knn_scan(table, queries, k, tie_rank=None):
    """Exact k nearest rows of ``table`` for every row of ``queries``.

    Ties in distance are broken by ascending ``tie_rank`` (defaults to the
    row index). Returns ``(indices, squared_distances)``, each ``(nq, k)``.
    """
    table = np.ascontiguousarray(table, dtype=np.float64)
    queries = np.ascontiguousarray(np.atleast_2d(queries), dtype=np.float64)
    if table.ndim != 2 or queries.shape[1] != table.shape[1]:
        raise ValueError(f"query dim {queries.shape[1]} does not match table dim {table.shape[1]}")
    if not 1 <= k <= len(table):
        raise ValueError(f"k must be in [1, {len(table)}], got {k}")
    if tie_rank is None:
        tie_rank = np.arange(len(table), dtype=np.int64)
    tie_rank = np.ascontiguousarray(tie_rank, dtype=np.int64)
    if HAVE_NUMBA:
        return _knn_scan_loop(table, queries, int(k), tie_rank)
    return _knn_scan_numpy(table, queries, int(k), tie_rank)


# --- fingerprint popcounts ------------------------------------------------

@njit
def _popcount64(x):
    x = x - ((x >> np.uint64(1)) & np.uint64(0x5555555555555555))
    x = (x & np.uint64(0x3333333333333333)) + ((x >> np.uint64(2)) & np.uint64(0x3333333333333333))
    x = (x + (x >> np.uint64(4))) & np.uint64(0x0F0F0F0F0F0F0F0F)
    if HAVE_NUMBA:
        # wraps mod 2**64 by design
        return (x * np.uint64(0x0101010101010101)) >> np.uint64(56)
    # interpreted numpy scalars warn on the wrap, so fold with shifts instead
    x = x + (x >> np.uint64(8))
    x = x + (x >> np.uint64(16))
    x = x + (x >> np.uint64(32))
    return x & np.uint64(0x7F)


@njit
def _tanimoto_many_loop(query, pool):
    n, w = pool.shape
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        inter = 0
        union = 0
        for j in range(w):
            a = query[j]
            b = pool[i, j]
            inter += _popcount64(a & b)
            union += _popcount64(a | b)
        out[i] = 1.0 if union == 0 else inter / union
    return out


def _tanimoto_many_numpy(query, pool):
    inter = np.bitwise_count(pool & query).sum(axis=1, dtype=np.int64)
    union = np.bitwise_count(pool | query).sum(axis=1, dtype=np.int64)
    out = np.ones(len(pool), dtype=np.float64)
    nz = union > 0
    out[nz] = inter[nz] / union[nz]
    return out


def tanimoto_many(query, pool):
    """Tanimoto of one packed bitset ``(w,)`` against many ``(n, w)``."""
    query = np.ascontiguousarray(query, dtype=np.uint64)
    pool = np.ascontiguousarray(np.atleast_2d(pool), dtype=np.uint64)
    if pool.shape[1] != query.shape[0]:
        raise ValueError("fingerprint width mismatch")
    if HAVE_NUMBA:
        return _tanimoto_many_loop(query, pool)
    return _tanimoto_many_numpy(query, pool)
