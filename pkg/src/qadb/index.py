"""Exact top-k cosine search over precomputed pair embeddings.

The index is a flat scan: every query scores every stored vector, so
results are exact and oracle-testable. Vectors are unit-normalized at
encode time, which makes the dot product the cosine.

On-disk layout (little-endian, bit-exact across rebuilds):

    offset  size  field
    0       4     magic  b"QAIX"
    4       4     u32 format version (1)
    8       4     u32 dimension d
    12      4     u32 input config (0 = question-only entries, 1 = q/a pair entries)
    16      8     u64 entry count N
    24      8     u64 reserved (zero)
    32      N*d*4 float32 vectors, row-major
    ...     N*8   u64 pair ids, row order

The input-config field records which encoder template produced the
entries, so queries are always scored against the space they were
built for. Builds land in a temp file and rename into place; an
interrupted build keeps completed batches in the temp file and can
resume, while the aborted partial batch is discarded.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable

import numpy as np

from .encoder import Encoder, SegmentedInput
from .errors import QAError
from .kernels import get_kernel

if TYPE_CHECKING:
    from .store import QAPair

MAGIC = b"QAIX"
VERSION = 1
HEADER = struct.Struct("<4sIIIQQ")

INPUT_QUESTION = "question"
INPUT_PAIR = "pair"
_INPUT_CODES = {INPUT_QUESTION: 0, INPUT_PAIR: 1}
_INPUT_NAMES = {v: k for k, v in _INPUT_CODES.items()}


class IndexFormatError(QAError):
    """The index file is missing, truncated, or not in the documented format."""


@dataclass(frozen=True)
class RetrievalResult:
    pair_id: int
    score: float


def cosine(u, v) -> float:
    """uᵀv / (‖u‖‖v‖) for two equal-dimension nonzero vectors."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.ndim != 1 or v.ndim != 1 or u.shape[0] != v.shape[0]:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine is undefined for a zero vector")
    return float(np.dot(u, v) / (nu * nv))


def _pair_input(pair: "QAPair", input_config: str) -> SegmentedInput:
    if input_config == INPUT_QUESTION:
        # Shared-branch question-only entries: same template as queries,
        # so a verbatim stored question scores cosine 1.
        return SegmentedInput.query(pair.question)
    return SegmentedInput.pair(pair.question, pair.answer)


class VectorIndex:
    """Immutable memory-mapped flat index; searches are freely concurrent."""

    def __init__(self, path: str, vectors: np.ndarray, pair_ids: np.ndarray, input_config: str):
        self.path = path
        self.vectors = vectors
        self.pair_ids = pair_ids
        self.input_config = input_config
        self._kernel = get_kernel()

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    def __len__(self) -> int:
        return int(self.vectors.shape[0])

    # -- persistence ---------------------------------------------------

    @classmethod
    def write(cls, path: str, vectors: np.ndarray, pair_ids, input_config: str = INPUT_PAIR) -> "VectorIndex":
        """Write vectors + ids as a new index generation (atomic rename)."""
        vectors = np.ascontiguousarray(vectors, dtype=np.float32)
        pair_ids = np.ascontiguousarray(pair_ids, dtype=np.uint64)
        if vectors.ndim != 2:
            raise ValueError("vectors must be a 2-d array")
        if pair_ids.shape[0] != vectors.shape[0]:
            raise ValueError("one pair id per vector required")
        n, d = vectors.shape
        tmp = path + ".tmp"
        with open(tmp, "wb") as fh:
            fh.write(HEADER.pack(MAGIC, VERSION, d, _INPUT_CODES[input_config], n, 0))
            fh.write(vectors.tobytes())
            fh.write(pair_ids.tobytes())
        os.replace(tmp, path)
        return cls.open(path)

    @classmethod
    def open(cls, path: str) -> "VectorIndex":
        if not os.path.exists(path):
            raise IndexFormatError(f"index file not found: {path}")
        size = os.path.getsize(path)
        if size < HEADER.size:
            raise IndexFormatError(f"index file too small: {path}")
        with open(path, "rb") as fh:
            magic, version, dim, input_code, count, _ = HEADER.unpack(fh.read(HEADER.size))
        if magic != MAGIC:
            raise IndexFormatError(f"bad magic in {path}")
        if version != VERSION:
            raise IndexFormatError(f"unsupported index version {version}")
        if input_code not in _INPUT_NAMES:
            raise IndexFormatError(f"unknown input-config code {input_code}")
        expected = HEADER.size + count * dim * 4 + count * 8
        if size != expected:
            raise IndexFormatError(f"index size mismatch: got {size}, expected {expected}")
        vectors = np.memmap(path, dtype=np.float32, mode="r", offset=HEADER.size, shape=(count, dim))
        pair_ids = np.memmap(
            path, dtype=np.uint64, mode="r", offset=HEADER.size + count * dim * 4, shape=(count,)
        )
        return cls(path, vectors, pair_ids, _INPUT_NAMES[input_code])

    @classmethod
    def build(
        cls,
        pairs: Iterable["QAPair"],
        encoder: Encoder,
        path: str,
        input_config: str = INPUT_PAIR,
        batch_size: int = 512,
        resume: bool = False,
    ) -> "VectorIndex":
        """Encode pairs (in the given order) into a new index generation.

        Completed batches checkpoint to `<path>.partial`; on encoder
        failure the in-flight batch is discarded and a later build with
        resume=True re-uses the checkpoint. The iteration order must be
        identical across attempts (the store exports in id order).
        """
        if input_config not in _INPUT_CODES:
            raise ValueError(f"unknown input config {input_config!r}")
        part_path = path + ".partial"
        ids_path = path + ".partial.ids"
        meta_path = path + ".partial.meta"
        done_rows = 0
        dim: int | None = None
        if resume and all(os.path.exists(p) for p in (part_path, ids_path, meta_path)):
            with open(meta_path, "r", encoding="utf-8") as fh:
                meta = json.load(fh)
            if meta.get("input_config") == input_config:
                done_rows = int(meta["rows"])
                dim = int(meta["dim"])
        else:
            for stale in (part_path, ids_path, meta_path):
                if os.path.exists(stale):
                    os.remove(stale)

        mode = "r+b" if done_rows else "wb"
        fh = open(part_path, mode)
        ids_fh = open(ids_path, mode)
        try:
            if done_rows:
                fh.seek(done_rows * dim * 4)
                ids_fh.seek(done_rows * 8)
            it = iter(pairs)
            skipped = 0
            while skipped < done_rows:
                next(it)
                skipped += 1
            batch: list[SegmentedInput] = []
            batch_ids: list[int] = []

            def flush():
                nonlocal dim, done_rows
                if not batch:
                    return
                vectors = encoder.encode_batch(batch)
                block = np.stack(vectors).astype(np.float32, copy=False)
                if dim is None:
                    dim = block.shape[1]
                elif block.shape[1] != dim:
                    raise QAError(f"encoder dim changed mid-build: {dim} -> {block.shape[1]}")
                fh.write(np.ascontiguousarray(block).tobytes())
                fh.flush()
                ids_fh.write(np.asarray(batch_ids, dtype=np.uint64).tobytes())
                ids_fh.flush()
                done_rows += block.shape[0]
                with open(meta_path, "w", encoding="utf-8") as mh:
                    json.dump({"rows": done_rows, "dim": dim, "input_config": input_config}, mh)
                batch.clear()
                batch_ids.clear()

            for pair in it:
                batch.append(_pair_input(pair, input_config))
                batch_ids.append(pair.id)
                if len(batch) >= batch_size:
                    flush()
            flush()
        finally:
            fh.close()
            ids_fh.close()

        if dim is None:
            dim = getattr(encoder, "dim", 0) or 8
        vectors = (
            np.fromfile(part_path, dtype=np.float32, count=done_rows * dim).reshape(done_rows, dim)
            if done_rows
            else np.empty((0, dim), dtype=np.float32)
        )
        done_ids = np.fromfile(ids_path, dtype=np.uint64, count=done_rows)
        built = cls.write(path, vectors, done_ids, input_config)
        for tmp in (part_path, ids_path, meta_path):
            if os.path.exists(tmp):
                os.remove(tmp)
        return built

    # -- search ----------------------------------------------------------

    def _check_query(self, query: np.ndarray, k: int) -> np.ndarray:
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        query = np.ascontiguousarray(query, dtype=np.float32)
        if query.ndim != 1 or (len(self) > 0 and query.shape[0] != self.dim):
            raise ValueError(f"query dimension {query.shape} does not match index dim {self.dim}")
        return query

    def score_all(self, query: np.ndarray) -> np.ndarray:
        """Dot product of the query against every entry (the scan, unselected)."""
        query = np.ascontiguousarray(query, dtype=np.float32)
        if query.shape[0] != self.dim:
            raise ValueError(f"query dimension {query.shape[0]} does not match index dim {self.dim}")
        return self._kernel.score_all(self.vectors, query)

    def search(self, query: np.ndarray, k: int) -> list[RetrievalResult]:
        """The k highest-cosine entries, score desc then pair id asc; exact."""
        query = self._check_query(query, k)
        if len(self) == 0:
            return []
        ids, scores = self._kernel.topk(self.vectors, self.pair_ids, query, k)
        return [RetrievalResult(int(i), float(s)) for i, s in zip(ids, scores)]

    def scan_latency_probe(self, query: np.ndarray, k: int):
        """Search with a wall-clock breakdown: (results, {"scan_ns", "select_ns"})."""
        import time

        query = self._check_query(query, k)
        if len(self) == 0:
            return [], {"scan_ns": 0, "select_ns": 0}
        t0 = time.perf_counter_ns()
        scores = self._kernel.score_all(self.vectors, query)
        t1 = time.perf_counter_ns()
        ids, top_scores = self._kernel.select(scores, self.pair_ids, k)
        t2 = time.perf_counter_ns()
        results = [RetrievalResult(int(i), float(s)) for i, s in zip(ids, top_scores)]
        return results, {"scan_ns": t1 - t0, "select_ns": t2 - t1}
