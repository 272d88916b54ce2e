# cython: boundscheck=False, wraparound=False, cdivision=True
"""C core for the flat cosine scan.

One pass over the row-major float32 matrix: a sequential float64 dot
product per row feeds a bounded worst-at-root heap of size k, so memory
traffic is a single read of the matrix regardless of k. Ordering is
(score desc, id asc); `score_all` and `topk` share the same dot-product
arithmetic, so the fused scan is bit-for-bit the top-k of `score_all`.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


cdef inline double _dot(const float* row, const float* q, Py_ssize_t d) noexcept nogil:
    cdef double acc = 0.0
    cdef Py_ssize_t j
    for j in range(d):
        acc += <double> row[j] * <double> q[j]
    return acc


cdef inline bint _worse(double s1, cnp.uint64_t i1,
                        double s2, cnp.uint64_t i2) noexcept nogil:
    # True when (s1, i1) ranks below (s2, i2): lower score, or same score
    # with a higher id.
    if s1 != s2:
        return s1 < s2
    return i1 > i2


cdef void _sift_down(double* hs, cnp.uint64_t* hi,
                     Py_ssize_t start, Py_ssize_t size) noexcept nogil:
    cdef Py_ssize_t root = start, child
    cdef double s
    cdef cnp.uint64_t i
    while True:
        child = 2 * root + 1
        if child >= size:
            return
        if child + 1 < size and _worse(hs[child + 1], hi[child + 1], hs[child], hi[child]):
            child += 1
        if _worse(hs[child], hi[child], hs[root], hi[root]):
            s = hs[root]; i = hi[root]
            hs[root] = hs[child]; hi[root] = hi[child]
            hs[child] = s; hi[child] = i
            root = child
        else:
            return


def score_all(const float[:, ::1] matrix, const float[::1] query):
    """Dot product of every matrix row with `query`, as float64."""
    cdef Py_ssize_t n = matrix.shape[0]
    cdef Py_ssize_t d = matrix.shape[1]
    if query.shape[0] != d:
        raise ValueError("query dimension mismatch")
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] out_view = out
    cdef Py_ssize_t i
    cdef const float* base
    cdef const float* q
    if n == 0:
        return out
    base = &matrix[0, 0]
    q = &query[0]
    with nogil:
        for i in range(n):
            out_view[i] = _dot(base + i * d, q, d)
    return out


def select_topk(const double[::1] scores, const cnp.uint64_t[::1] ids, Py_ssize_t k):
    """Top-k of precomputed scores; returns (ids, scores) best-first."""
    cdef Py_ssize_t n = scores.shape[0]
    if ids.shape[0] != n:
        raise ValueError("ids/scores length mismatch")
    cdef Py_ssize_t m = k if k < n else n
    out_ids = np.empty(m, dtype=np.uint64)
    out_scores = np.empty(m, dtype=np.float64)
    cdef cnp.uint64_t[::1] oi = out_ids
    cdef double[::1] os = out_scores
    if m == 0:
        return out_ids, out_scores
    heap_scores = np.empty(m, dtype=np.float64)
    heap_ids = np.empty(m, dtype=np.uint64)
    cdef double[::1] hs = heap_scores
    cdef cnp.uint64_t[::1] hi = heap_ids
    cdef Py_ssize_t i, size
    with nogil:
        for i in range(m):
            hs[i] = scores[i]
            hi[i] = ids[i]
        for i in range(m // 2 - 1, -1, -1):
            _sift_down(&hs[0], &hi[0], i, m)
        for i in range(m, n):
            if _worse(hs[0], hi[0], scores[i], ids[i]):
                hs[0] = scores[i]
                hi[0] = ids[i]
                _sift_down(&hs[0], &hi[0], 0, m)
        for size in range(m, 0, -1):
            os[size - 1] = hs[0]
            oi[size - 1] = hi[0]
            hs[0] = hs[size - 1]
            hi[0] = hi[size - 1]
            _sift_down(&hs[0], &hi[0], 0, size - 1)
    return out_ids, out_scores


def topk(const float[:, ::1] matrix, const cnp.uint64_t[::1] ids,
         const float[::1] query, Py_ssize_t k):
    """Fused scan + bounded top-k selection; returns (ids, scores) best-first."""
    cdef Py_ssize_t n = matrix.shape[0]
    cdef Py_ssize_t d = matrix.shape[1]
    if query.shape[0] != d:
        raise ValueError("query dimension mismatch")
    if ids.shape[0] != n:
        raise ValueError("ids/matrix length mismatch")
    cdef Py_ssize_t m = k if k < n else n
    out_ids = np.empty(m, dtype=np.uint64)
    out_scores = np.empty(m, dtype=np.float64)
    cdef cnp.uint64_t[::1] oi = out_ids
    cdef double[::1] os = out_scores
    if m == 0:
        return out_ids, out_scores
    heap_scores = np.empty(m, dtype=np.float64)
    heap_ids = np.empty(m, dtype=np.uint64)
    cdef double[::1] hs = heap_scores
    cdef cnp.uint64_t[::1] hi = heap_ids
    cdef Py_ssize_t i, size
    cdef double s
    cdef const float* base = &matrix[0, 0]
    cdef const float* q = &query[0]
    with nogil:
        for i in range(m):
            hs[i] = _dot(base + i * d, q, d)
            hi[i] = ids[i]
        for i in range(m // 2 - 1, -1, -1):
            _sift_down(&hs[0], &hi[0], i, m)
        for i in range(m, n):
            s = _dot(base + i * d, q, d)
            if _worse(hs[0], hi[0], s, ids[i]):
                hs[0] = s
                hi[0] = ids[i]
                _sift_down(&hs[0], &hi[0], 0, m)
        for size in range(m, 0, -1):
            os[size - 1] = hs[0]
            oi[size - 1] = hi[0]
            hs[0] = hs[size - 1]
            hi[0] = hi[size - 1]
            _sift_down(&hs[0], &hi[0], 0, size - 1)
    return out_ids, out_scores
