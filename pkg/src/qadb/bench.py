"""Latency harness: end-to-end latency vs number of reranked candidates,
retrieval latency vs database size, and a scan-kernel comparison.

Every point is the mean over `reps` timed executions on a warm index
(10 discarded warmup iterations by default), reported with its standard
deviation so runs can be compared against noise. The CSV output
(x, stage, mean_seconds, stddev_seconds, reps) is directly plottable.
"""

from __future__ import annotations

import csv
import io
import os
import random
import statistics
import string
import time
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .encoder import Encoder, ReferenceEncoder
from .index import INPUT_QUESTION, VectorIndex
from .kernels import available_kernels, get_kernel
from .rerank import Scorer, rerank

LOW_CONFIDENCE_REPS = 30
DEFAULT_WARMUP = 10


@dataclass(frozen=True)
class BenchPoint:
    x: int
    stage: str
    mean_seconds: float
    stddev_seconds: float
    reps: int

    @property
    def low_confidence(self) -> bool:
        return self.reps < LOW_CONFIDENCE_REPS


def _measure(fn: Callable[[], object], reps: int, warmup: int) -> tuple[float, float]:
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    mean = statistics.fmean(times)
    stddev = statistics.stdev(times) if len(times) > 1 else 0.0
    return mean, stddev


def bench_candidates(
    index: VectorIndex,
    scorer: Scorer,
    layout: str,
    queries: Sequence[str],
    query_vectors: Sequence[np.ndarray],
    candidate_lookup: Callable[[int], tuple[int, str, str]],
    ks: Sequence[int],
    reps: int,
    warmup: int = DEFAULT_WARMUP,
    interleave: bool = False,
) -> list[BenchPoint]:
    """Per-k means for the retrieval, rerank, and total stages.

    Retrieval is timed on its own; rerank is timed over the top-k
    candidates fetched once up front, so the two stages don't share a
    clock. `candidate_lookup` maps a pair id to (pair_id, question,
    answer), typically a closure over the store.

    With interleave=True each stage's per-k points are measured as one
    block of randomized-order interleaved repetitions, so machine-load
    drift hits every k of a stage equally. Points are only ever
    compared within a stage (the flat-retrieval and linear-rerank
    checks), so cross-stage drift does not matter; keeping each block
    short and free of the other stages' cache and I/O footprint is
    what makes the comparison fair on a busy machine.
    """
    n_queries = len(queries)
    counter = {"i": 0}

    def next_query() -> int:
        i = counter["i"] % n_queries
        counter["i"] += 1
        return i

    runners: dict[tuple[str, int], Callable[[], None]] = {}
    for k in ks:
        per_query_candidates = []
        for vec in query_vectors:
            results = index.search(vec, k)
            per_query_candidates.append([candidate_lookup(r.pair_id) for r in results])

        def run_retrieval(k=k):
            index.search(query_vectors[next_query()], k)

        def run_rerank(k=k, prefetched=per_query_candidates):
            i = next_query()
            rerank(scorer, layout, queries[i], prefetched[i])

        def run_total(k=k):
            i = next_query()
            results = index.search(query_vectors[i], k)
            candidates = [candidate_lookup(r.pair_id) for r in results]
            rerank(scorer, layout, queries[i], candidates)

        runners[("retrieval", k)] = run_retrieval
        runners[("rerank", k)] = run_rerank
        runners[("total", k)] = run_total

    stats: dict[tuple[str, int], tuple[float, float]] = {}
    if interleave:
        order_rng = random.Random(0)
        for stage in ("retrieval", "rerank", "total"):
            block = [key for key in runners if key[0] == stage]
            for key in block:
                for _ in range(warmup):
                    runners[key]()
            samples: dict[tuple[str, int], list[float]] = {key: [] for key in block}
            for _ in range(reps):
                order_rng.shuffle(block)
                for key in block:
                    fn = runners[key]
                    t0 = time.perf_counter()
                    fn()
                    samples[key].append(time.perf_counter() - t0)
            for key, times in samples.items():
                stats[key] = (
                    statistics.fmean(times),
                    statistics.stdev(times) if len(times) > 1 else 0.0,
                )
    else:
        for key, fn in runners.items():
            counter["i"] = 0
            stats[key] = _measure(fn, reps, warmup)

    return [
        BenchPoint(x=k, stage=stage, mean_seconds=mean, stddev_seconds=stddev, reps=reps)
        for (stage, k), (mean, stddev) in stats.items()
    ]


def bench_throughput(
    index: VectorIndex,
    scorer: Scorer,
    layout: str,
    queries: Sequence[str],
    query_vectors: Sequence[np.ndarray],
    candidate_lookup: Callable[[int], tuple[int, str, str]],
    k: int,
    reps: int,
    concurrency: int,
    warmup: int = DEFAULT_WARMUP,
) -> BenchPoint:
    """Mean per-request latency with `concurrency` parallel clients.

    Reported as its own stage so single-client latency numbers never mix
    with loaded-throughput numbers.
    """
    import concurrent.futures

    n_queries = len(queries)

    def one_request(i: int):
        results = index.search(query_vectors[i % n_queries], k)
        candidates = [candidate_lookup(r.pair_id) for r in results]
        rerank(scorer, layout, queries[i % n_queries], candidates)

    for i in range(warmup):
        one_request(i)
    times = []
    with concurrent.futures.ThreadPoolExecutor(max_workers=concurrency) as pool:
        def timed(i: int) -> float:
            t0 = time.perf_counter()
            one_request(i)
            return time.perf_counter() - t0

        times = list(pool.map(timed, range(reps)))
    mean = statistics.fmean(times)
    stddev = statistics.stdev(times) if len(times) > 1 else 0.0
    return BenchPoint(
        x=k, stage=f"total_c{concurrency}", mean_seconds=mean, stddev_seconds=stddev, reps=reps
    )


_WORDS: list[str] | None = None


def _vocabulary(size: int = 4000, seed: int = 20) -> list[str]:
    global _WORDS
    if _WORDS is None:
        rng = random.Random(seed)
        _WORDS = [
            "".join(rng.choice(string.ascii_lowercase) for _ in range(rng.randint(3, 9)))
            for _ in range(size)
        ]
    return _WORDS


def synthetic_questions(n: int, seed: int) -> list[str]:
    """Deterministic nonsense questions for scan-scaling fixtures."""
    vocab = _vocabulary()
    rng = random.Random(seed)
    return [
        " ".join(rng.choice(vocab) for _ in range(rng.randint(6, 12))) + "?" for _ in range(n)
    ]


def build_synthetic_index(
    n: int, dim: int, seed: int, path: str, encoder: Encoder | None = None
) -> VectorIndex:
    """Reference-encoder index over generated text; cached at `path`."""
    if os.path.exists(path):
        existing = VectorIndex.open(path)
        if len(existing) == n and existing.dim == dim:
            return existing
    encoder = encoder or ReferenceEncoder(dim=dim, seed=seed)
    questions = synthetic_questions(n, seed)
    vectors = np.empty((n, dim), dtype=np.float32)
    block = 2048
    for start in range(0, n, block):
        chunk = questions[start : start + block]
        for offset, text in enumerate(chunk):
            vectors[start + offset] = encoder.encode_query(text)
    ids = np.arange(n, dtype=np.uint64)
    return VectorIndex.write(path, vectors, ids, INPUT_QUESTION)


def bench_db_scaling(
    sizes: Sequence[int],
    k: int,
    reps: int,
    dim: int,
    seed: int,
    workdir: str,
    warmup: int = DEFAULT_WARMUP,
) -> list[BenchPoint]:
    """Retrieval-stage means while the database grows, k held fixed."""
    os.makedirs(workdir, exist_ok=True)
    rng = np.random.default_rng(seed)
    points = []
    for n in sizes:
        index = build_synthetic_index(n, dim, seed, os.path.join(workdir, f"scale_{n}_{dim}.qaix"))
        queries = rng.standard_normal((32, dim)).astype(np.float32)
        queries /= np.linalg.norm(queries, axis=1, keepdims=True)
        counter = {"i": 0}

        def run():
            i = counter["i"] % queries.shape[0]
            counter["i"] += 1
            index.search(queries[i], k)

        mean, stddev = _measure(run, reps, warmup)
        points.append(
            BenchPoint(x=n, stage="retrieval", mean_seconds=mean, stddev_seconds=stddev, reps=reps)
        )
    return points


def bench_kernels(
    n: int, dim: int, ks: Sequence[int], reps: int, seed: int = 0, warmup: int = DEFAULT_WARMUP
) -> list[BenchPoint]:
    """Time every available scan backend on one shared random index."""
    rng = np.random.default_rng(seed)
    matrix = rng.standard_normal((n, dim)).astype(np.float32)
    matrix /= np.linalg.norm(matrix, axis=1, keepdims=True)
    matrix = np.ascontiguousarray(matrix)
    ids = np.arange(n, dtype=np.uint64)
    query = matrix[rng.integers(n)].copy()
    points = []
    for name in available_kernels():
        kernel = get_kernel(name)
        for k in ks:
            mean, stddev = _measure(lambda: kernel.topk(matrix, ids, query, k), reps, warmup)
            points.append(
                BenchPoint(
                    x=k,
                    stage=f"scan[{name}]",
                    mean_seconds=mean,
                    stddev_seconds=stddev,
                    reps=reps,
                )
            )
    return points


def emit_report(points: Sequence[BenchPoint], csv_path: str | None = None) -> tuple[str, str]:
    """Render points as (CSV text, aligned table text), sorted by (stage, x)."""
    if not points:
        raise ValueError("no bench points to report")
    ordered = sorted(points, key=lambda p: (p.stage, p.x))
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["x", "stage", "mean_seconds", "stddev_seconds", "reps"])
    for p in ordered:
        writer.writerow([p.x, p.stage, f"{p.mean_seconds:.9f}", f"{p.stddev_seconds:.9f}", p.reps])
    csv_text = buf.getvalue()
    if csv_path:
        with open(csv_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(csv_text)

    header = f"{'stage':<16} {'x':>8} {'mean_s':>12} {'stddev_s':>12} {'reps':>6}"
    lines = [header, "-" * len(header)]
    for p in ordered:
        flag = "  (low confidence)" if p.low_confidence else ""
        lines.append(
            f"{p.stage:<16} {p.x:>8} {p.mean_seconds:>12.6f} {p.stddev_seconds:>12.6f} {p.reps:>6}{flag}"
        )
    return csv_text, "\n".join(lines)


def load_report(path: str) -> list[BenchPoint]:
    points = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            points.append(
                BenchPoint(
                    x=int(row["x"]),
                    stage=row["stage"],
                    mean_seconds=float(row["mean_seconds"]),
                    stddev_seconds=float(row["stddev_seconds"]),
                    reps=int(row["reps"]),
                )
            )
    return points


def stage_points(points: Iterable[BenchPoint], stage: str) -> list[BenchPoint]:
    return sorted((p for p in points if p.stage == stage), key=lambda p: p.x)


def linear_r2(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Coefficient of determination of the least-squares line through (xs, ys)."""
    if len(xs) != len(ys) or len(xs) < 3:
        raise ValueError("need at least 3 points")
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    slope, intercept = np.polyfit(x, y, 1)
    predicted = slope * x + intercept
    ss_res = float(np.sum((y - predicted) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    if ss_tot == 0.0:
        return 1.0
    return 1.0 - ss_res / ss_tot
