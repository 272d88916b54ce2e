"""Scan-kernel backends: compiled C core with a numpy fallback.

The backend is picked at import time: the C extension when it built,
numpy otherwise. Override with QA_KERNEL=c|py (or `get_kernel("py")`).
`qa bench kernels` times both on identical data.

Backend contract: given a C-contiguous float32 matrix of unit-norm row
vectors, a uint64 id per row, and a float32 unit-norm query,
  score_all(matrix, query)      -> per-row dot products
  select(scores, ids, k)        -> exact top-k of precomputed scores
  topk(matrix, ids, query, k)   -> exact top-k, (ids, scores) best-first
Ordering is always (score desc, id asc); `topk` returns exactly what a
full sort of `score_all` would, so the two can be cross-checked.
"""

from __future__ import annotations

import os

import numpy as np

try:
    from . import _scan as _cext
except ImportError:
    _cext = None


class NumpyKernel:
    """BLAS matvec for the scan, argpartition + exact tie repair for selection."""

    name = "py"

    @staticmethod
    def score_all(matrix: np.ndarray, query: np.ndarray) -> np.ndarray:
        return matrix @ query

    @staticmethod
    def select(scores: np.ndarray, ids: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
        n = scores.shape[0]
        if k >= n:
            order = np.lexsort((ids, -scores))
            return ids[order], scores[order]
        part = np.argpartition(scores, n - k)[n - k :]
        cutoff = scores[part].min()
        chosen = np.flatnonzero(scores > cutoff)
        ties = np.flatnonzero(scores == cutoff)
        need = k - chosen.size
        # argpartition breaks score ties arbitrarily; keep the lowest ids.
        ties = ties[np.argsort(ids[ties], kind="stable")][:need]
        chosen = np.concatenate([chosen, ties])
        order = np.lexsort((ids[chosen], -scores[chosen]))
        return ids[chosen][order], scores[chosen][order]

    @classmethod
    def topk(cls, matrix, ids, query, k):
        scores = cls.score_all(matrix, query)
        return cls.select(scores, ids, k)


class CKernel:
    """Fused single-pass scan + bounded heap, from the compiled extension."""

    name = "c"

    @staticmethod
    def score_all(matrix: np.ndarray, query: np.ndarray) -> np.ndarray:
        return _cext.score_all(matrix, query)

    @staticmethod
    def select(scores: np.ndarray, ids: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
        return _cext.select_topk(np.ascontiguousarray(scores, dtype=np.float64), ids, k)

    @staticmethod
    def topk(matrix, ids, query, k):
        return _cext.topk(matrix, ids, query, k)


def available_kernels() -> list[str]:
    names = ["py"]
    if _cext is not None:
        names.insert(0, "c")
    return names


def get_kernel(name: str | None = None):
    """Resolve a kernel backend by name, env override, or availability."""
    if name is None:
        name = os.environ.get("QA_KERNEL", "auto")
    if name in ("auto", ""):
        return CKernel if _cext is not None else NumpyKernel
    if name == "py":
        return NumpyKernel
    if name == "c":
        if _cext is None:
            raise RuntimeError("C scan kernel requested but the extension is not built")
        return CKernel
    raise ValueError(f"unknown kernel backend {name!r} (expected 'c', 'py', or 'auto')")
