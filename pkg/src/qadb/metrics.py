"""Ranking metrics (P@1, MAP, MRR, Hit-rate@k) and the dataset loader.

Conventions: queries with no positive candidate contribute 0 to every
metric and stay in the denominator. MAP's recall base is the positives
inside the annotated candidate pool. Score ties break by ascending
pair id before metrics are computed.

Dataset format: JSONL, one object per line:
    {"target": str, "split": "train"|"dev"|"test",
     "candidates": [{"pair_id": int, "question": str, "answer": str, "label": 0|1}, ...]}
dev/test examples carry exactly 30 candidates, train at most 30.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import DatasetError

SPLITS = ("train", "dev", "test")
DEFAULT_HIT_KS = (1, 3, 5, 7, 10, 15, 20, 25, 30)
POOL_SIZE = 30


def average_precision(labels: Sequence[int]) -> float:
    """Mean of precision-at-i over the positive positions i; 0 without positives."""
    if len(labels) == 0:
        raise ValueError("labels must be non-empty")
    hits = 0
    total = 0.0
    for i, label in enumerate(labels, start=1):
        if label:
            hits += 1
            total += hits / i
    return total / hits if hits else 0.0


def reciprocal_rank(labels: Sequence[int]) -> float:
    """1 / rank of the first positive; 0 without positives."""
    if len(labels) == 0:
        raise ValueError("labels must be non-empty")
    for i, label in enumerate(labels, start=1):
        if label:
            return 1.0 / i
    return 0.0


def hit_at_k(labels: Sequence[int], k: int) -> int:
    """1 iff any positive appears in the first min(k, len) positions."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    return 1 if any(labels[: min(k, len(labels))]) else 0


@dataclass(frozen=True)
class Candidate:
    pair_id: int
    question: str
    answer: str
    label: int


@dataclass(frozen=True)
class RankingExample:
    target: str
    candidates: tuple[Candidate, ...]
    split: str


@dataclass
class MetricsReport:
    p_at_1: float
    map: float
    mrr: float
    hit_at_k: dict[int, float]
    n_queries: int
    n_zero_positive: int

    def to_dict(self) -> dict:
        return {
            "p_at_1": self.p_at_1,
            "map": self.map,
            "mrr": self.mrr,
            "hit_at_k": {str(k): v for k, v in sorted(self.hit_at_k.items())},
            "n_queries": self.n_queries,
            "n_zero_positive": self.n_zero_positive,
        }


def evaluate(
    dataset: Sequence[RankingExample],
    scores: Sequence[Sequence[float]] | None = None,
    ks: Iterable[int] = DEFAULT_HIT_KS,
) -> MetricsReport:
    """Metric means over every query, zero-positive queries included.

    `scores` holds one score per candidate per example; candidates are
    re-sorted by (score desc, pair_id asc) before computing metrics.
    With scores=None the given candidate order is scored as-is.
    """
    ks = sorted(set(ks) | {1})
    if scores is not None and len(scores) != len(dataset):
        raise ValueError(f"got {len(scores)} score lists for {len(dataset)} examples")
    n = len(dataset)
    if n == 0:
        return MetricsReport(0.0, 0.0, 0.0, {k: 0.0 for k in ks}, 0, 0)
    ap_sum = rr_sum = 0.0
    hit_sums = {k: 0 for k in ks}
    n_zero = 0
    for idx, example in enumerate(dataset):
        if scores is None:
            ordered = list(example.candidates)
        else:
            row = scores[idx]
            if len(row) != len(example.candidates):
                raise ValueError(
                    f"example {idx}: {len(row)} scores for {len(example.candidates)} candidates"
                )
            ordered = [
                c
                for _, c in sorted(
                    zip(row, example.candidates), key=lambda pair: (-pair[0], pair[1].pair_id)
                )
            ]
        labels = [c.label for c in ordered]
        if not any(labels):
            n_zero += 1
        ap_sum += average_precision(labels)
        rr_sum += reciprocal_rank(labels)
        for k in ks:
            hit_sums[k] += hit_at_k(labels, k)
    hit_rates = {k: hit_sums[k] / n for k in ks}
    return MetricsReport(
        p_at_1=hit_rates[1],
        map=ap_sum / n,
        mrr=rr_sum / n,
        hit_at_k=hit_rates,
        n_queries=n,
        n_zero_positive=n_zero,
    )


def _check(condition: bool, message: str, line: int):
    if not condition:
        raise DatasetError(message, line=line)


def parse_example(obj: dict, line: int = 0) -> RankingExample:
    _check(isinstance(obj, dict), "expected a JSON object", line)
    target = obj.get("target")
    _check(isinstance(target, str) and bool(target.strip()), "target must be non-empty text", line)
    split = obj.get("split")
    _check(split in SPLITS, f"split must be one of {SPLITS}, got {split!r}", line)
    raw_candidates = obj.get("candidates")
    _check(
        isinstance(raw_candidates, list) and len(raw_candidates) > 0,
        "candidates must be a non-empty list",
        line,
    )
    if split in ("dev", "test"):
        _check(
            len(raw_candidates) == POOL_SIZE,
            f"{split} examples need exactly {POOL_SIZE} candidates, got {len(raw_candidates)}",
            line,
        )
    else:
        _check(
            len(raw_candidates) <= POOL_SIZE,
            f"train examples allow at most {POOL_SIZE} candidates, got {len(raw_candidates)}",
            line,
        )
    candidates = []
    for c in raw_candidates:
        _check(isinstance(c, dict), "candidate must be an object", line)
        label = c.get("label")
        _check(label in (0, 1) and not isinstance(label, bool), "label must be 0 or 1", line)
        pair_id = c.get("pair_id")
        _check(
            isinstance(pair_id, int) and not isinstance(pair_id, bool) and pair_id >= 0,
            "pair_id must be a non-negative integer",
            line,
        )
        question = c.get("question")
        _check(isinstance(question, str) and bool(question.strip()), "candidate question must be non-empty", line)
        answer = c.get("answer")
        _check(isinstance(answer, str), "candidate answer must be text", line)
        candidates.append(Candidate(pair_id=pair_id, question=question, answer=answer, label=label))
    return RankingExample(target=target, candidates=tuple(candidates), split=split)


def load_dataset(path: str) -> list[RankingExample]:
    examples = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"invalid JSON ({exc.msg})", line=line_no) from exc
            examples.append(parse_example(obj, line_no))
    return examples


def save_dataset(examples: Iterable[RankingExample], path: str):
    with open(path, "w", encoding="utf-8") as fh:
        for example in examples:
            obj = {
                "target": example.target,
                "split": example.split,
                "candidates": [
                    {
                        "pair_id": c.pair_id,
                        "question": c.question,
                        "answer": c.answer,
                        "label": c.label,
                    }
                    for c in example.candidates
                ],
            }
            fh.write(json.dumps(obj, ensure_ascii=False, sort_keys=True) + "\n")


def render_table(report: MetricsReport) -> str:
    """Aligned text table of the report, for terminal output."""
    rows = [
        ("queries", str(report.n_queries)),
        ("zero-positive", str(report.n_zero_positive)),
        ("P@1", f"{report.p_at_1:.4f}"),
        ("MAP", f"{report.map:.4f}"),
        ("MRR", f"{report.mrr:.4f}"),
    ]
    rows += [(f"Hit@{k}", f"{v:.4f}") for k, v in sorted(report.hit_at_k.items())]
    width = max(len(name) for name, _ in rows)
    return "\n".join(f"{name:<{width}}  {value}" for name, value in rows)
