"""Crowd-annotation protocol: task generation with control triplets,
judgment validation, worker blacklisting, majority-vote aggregation,
and export to the ranking-dataset format.

Each task bundles 7 triplets: 5 real candidates plus one positive and
one negative control at seeded-random positions. Getting either
control wrong rejects the whole task; a worker whose failure rate goes
strictly above 10% of their validated tasks is blacklisted and all
their judgments (accepted ones included) are discarded.

Worker-facing task files never contain control metadata; that lives in
a separate answer-key file.
"""

from __future__ import annotations

import csv
import json
import random
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

from .errors import DatasetError
from .metrics import Candidate, RankingExample

TASK_SIZE = 7
REAL_PER_TASK = 5
BLACKLIST_RATE = 0.10
REWARD_USD = 0.15

NEEDS_TIEBREAK = "needs_tiebreak"


class JudgmentStatus(Enum):
    ACCEPTED = "accepted"
    REJECTED = "rejected"


@dataclass(frozen=True)
class RealTriplet:
    """A retrieved candidate queued for annotation, with provenance."""

    target_id: int
    target: str
    pair_id: int
    question: str
    answer: str


@dataclass(frozen=True)
class ControlTriplet:
    target: str
    question: str
    answer: str


@dataclass(frozen=True)
class TaskItem:
    target: str
    question: str
    answer: str
    kind: str  # "real" | "control_positive" | "control_negative"
    target_id: int | None = None
    pair_id: int | None = None
    padding: bool = False


@dataclass(frozen=True)
class AnnotationTask:
    task_id: int
    items: tuple[TaskItem, ...]
    positive_control: int
    negative_control: int
    reward_usd: float = REWARD_USD

    def __post_init__(self):
        if len(self.items) != TASK_SIZE:
            raise ValueError(f"a task holds exactly {TASK_SIZE} items, got {len(self.items)}")
        if self.items[self.positive_control].kind != "control_positive":
            raise ValueError("positive_control position does not hold a positive control")
        if self.items[self.negative_control].kind != "control_negative":
            raise ValueError("negative_control position does not hold a negative control")


@dataclass(frozen=True)
class Judgment:
    worker_id: str
    task_id: int
    labels: tuple[int, ...]
    submitted_at: float = 0.0


@dataclass
class WorkerRecord:
    worker_id: str
    assigned: int = 0
    failed: int = 0

    @property
    def failure_rate(self) -> float:
        return self.failed / self.assigned if self.assigned else 0.0

    @property
    def blacklisted(self) -> bool:
        return self.failure_rate > BLACKLIST_RATE


class WorkerLedger:
    """Per-worker assigned/failed counters, updated as tasks are validated."""

    def __init__(self):
        self.records: dict[str, WorkerRecord] = {}

    def record(self, worker_id: str, rejected: bool) -> WorkerRecord:
        rec = self.records.setdefault(worker_id, WorkerRecord(worker_id))
        rec.assigned += 1
        if rejected:
            rec.failed += 1
        return rec


def generate_tasks(
    real_triplets: Sequence[RealTriplet],
    positive_controls: Sequence[ControlTriplet],
    question_pool: Sequence[tuple[str, str]],
    seed: int,
) -> list[AnnotationTask]:
    """Bundle real triplets into 7-item tasks with seeded control placement.

    Real triplets are chunked 5 per task in order; a short final chunk
    is padded with extra positive controls flagged `padding` (never
    exported, not used for validation). The negative control pairs two
    distinct random questions from the pool, so its expected label is 0
    by construction.
    """
    if not real_triplets:
        raise ValueError("no real triplets to annotate")
    if not positive_controls:
        raise ValueError("at least one positive control is required")
    distinct_pool = {q for q, _ in question_pool}
    if len(distinct_pool) < 2:
        raise ValueError("question pool must contain at least 2 distinct questions")

    rng = random.Random(seed)
    tasks = []
    for task_id, start in enumerate(range(0, len(real_triplets), REAL_PER_TASK)):
        chunk = real_triplets[start : start + REAL_PER_TASK]
        items = [
            TaskItem(
                target=r.target,
                question=r.question,
                answer=r.answer,
                kind="real",
                target_id=r.target_id,
                pair_id=r.pair_id,
            )
            for r in chunk
        ]
        for _ in range(REAL_PER_TASK - len(chunk)):
            pad = rng.choice(positive_controls)
            items.append(
                TaskItem(pad.target, pad.question, pad.answer, "control_positive", padding=True)
            )
        pos = rng.choice(positive_controls)
        items.append(TaskItem(pos.target, pos.question, pos.answer, "control_positive"))
        first = question_pool[rng.randrange(len(question_pool))]
        while True:
            second = question_pool[rng.randrange(len(question_pool))]
            if second[0] != first[0]:
                break
        items.append(TaskItem(first[0], second[0], second[1], "control_negative"))
        rng.shuffle(items)
        positive = next(
            i for i, it in enumerate(items) if it.kind == "control_positive" and not it.padding
        )
        negative = next(i for i, it in enumerate(items) if it.kind == "control_negative")
        tasks.append(
            AnnotationTask(
                task_id=task_id,
                items=tuple(items),
                positive_control=positive,
                negative_control=negative,
            )
        )
    return tasks


def validate_judgment(
    task: AnnotationTask, judgment: Judgment, ledger: WorkerLedger
) -> JudgmentStatus:
    """Accept or reject one judgment against the task's two controls.

    Either control answered wrong rejects the task (a single rejection,
    even when both are wrong). The worker's ledger counters update
    either way.
    """
    if judgment.task_id != task.task_id:
        raise ValueError(f"judgment for task {judgment.task_id} checked against task {task.task_id}")
    if len(judgment.labels) != TASK_SIZE:
        raise ValueError(f"expected {TASK_SIZE} labels, got {len(judgment.labels)}")
    if any(label not in (0, 1) for label in judgment.labels):
        raise ValueError("labels must be 0 or 1")
    rejected = (
        judgment.labels[task.positive_control] != 1 or judgment.labels[task.negative_control] != 0
    )
    ledger.record(judgment.worker_id, rejected)
    return JudgmentStatus.REJECTED if rejected else JudgmentStatus.ACCEPTED


def apply_blacklist(
    ledger: WorkerLedger, judgments: Iterable[Judgment]
) -> tuple[set[str], list[tuple[str, int]]]:
    """Flag workers whose failure rate is strictly above the threshold.

    Returns (blacklisted worker ids, discarded (worker_id, task_id)
    judgments) covering ALL judgments of blacklisted workers, accepted
    ones included.
    """
    blacklisted = {w for w, rec in ledger.records.items() if rec.blacklisted}
    discarded = [(j.worker_id, j.task_id) for j in judgments if j.worker_id in blacklisted]
    return blacklisted, discarded


def aggregate_labels(labels: Sequence[int]) -> int | str:
    """Majority vote over 1-3 surviving labels.

    Two agreeing labels decide; a 1-1 split or a lone surviving label
    needs a tiebreak annotation; three labels take the majority.
    """
    if len(labels) == 0:
        raise ValueError("no surviving labels to aggregate")
    if len(labels) > 3:
        raise ValueError(f"at most 3 labels per item, got {len(labels)}")
    if any(label not in (0, 1) for label in labels):
        raise ValueError("labels must be 0 or 1")
    if len(labels) == 1:
        return NEEDS_TIEBREAK
    if len(labels) == 2:
        return labels[0] if labels[0] == labels[1] else NEEDS_TIEBREAK
    return 1 if sum(labels) >= 2 else 0


@dataclass(frozen=True)
class AnnotatedTarget:
    """One target question with its retrieved candidate pool."""

    target_id: int
    target: str
    candidates: tuple[tuple[int, str, str], ...]  # (pair_id, question, answer)


def split_counts(n: int, fractions: Sequence[float]) -> list[int]:
    """Largest-remainder allocation of n items to the split fractions."""
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"split fractions must sum to 1, got {sum(fractions)}")
    floors = [int(f * n) for f in fractions]
    remainders = [f * n - c for f, c in zip(fractions, floors)]
    for _ in range(n - sum(floors)):
        i = max(range(len(fractions)), key=lambda j: (remainders[j], -j))
        floors[i] += 1
        remainders[i] = -1.0
    return floors


def export_ranking_dataset(
    targets: Sequence[AnnotatedTarget],
    final_labels: dict[tuple[int, int], int | str],
    seed: int,
    fractions: Sequence[float] = (0.77, 0.10, 0.13),
) -> list[RankingExample]:
    """Assemble labeled targets into train/dev/test RankingExamples.

    Every candidate needs a settled binary label; an outstanding
    tiebreak aborts the export naming the candidate. Dev and test
    require full 30-candidate pools, so the seeded split assignment
    only places eligible targets there.
    """
    from .metrics import POOL_SIZE

    for target in targets:
        for pair_id, _, _ in target.candidates:
            label = final_labels.get((target.target_id, pair_id))
            if label is None:
                raise DatasetError(
                    f"target {target.target_id} candidate {pair_id} has no aggregated label"
                )
            if label == NEEDS_TIEBREAK:
                raise DatasetError(
                    f"target {target.target_id} candidate {pair_id} still needs a tiebreak"
                )

    n_train, n_dev, n_test = split_counts(len(targets), fractions)
    shuffled = list(targets)
    random.Random(seed).shuffle(shuffled)
    assignment: dict[int, str] = {}
    n_assigned_dev = n_assigned_test = 0
    for target in shuffled:
        eligible = len(target.candidates) == POOL_SIZE
        if eligible and n_assigned_test < n_test:
            assignment[target.target_id] = "test"
            n_assigned_test += 1
        elif eligible and n_assigned_dev < n_dev:
            assignment[target.target_id] = "dev"
            n_assigned_dev += 1
        else:
            assignment[target.target_id] = "train"
    if n_assigned_test < n_test or n_assigned_dev < n_dev:
        raise DatasetError(
            f"not enough {POOL_SIZE}-candidate targets to fill dev/test "
            f"(need {n_dev}/{n_test}, placed {n_assigned_dev}/{n_assigned_test})"
        )

    examples = []
    for target in targets:
        candidates = tuple(
            Candidate(
                pair_id=pair_id,
                question=question,
                answer=answer,
                label=int(final_labels[(target.target_id, pair_id)]),
            )
            for pair_id, question, answer in target.candidates
        )
        examples.append(
            RankingExample(
                target=target.target, candidates=candidates, split=assignment[target.target_id]
            )
        )
    return examples


# -- file formats ---------------------------------------------------------
#
# Worker-facing tasks JSONL:  {"task_id", "reward_usd", "items": [{"target",
# "question", "answer"} x7]} -- no control markers.
# Answer key JSON: {"<task_id>": {"positive": i, "negative": j, "items":
# [{"kind", "padding", "target_id", "pair_id"} x7]}}.
# Judgments CSV: task_id,worker_id,labels  with labels like "1011010".


def write_tasks(tasks: Sequence[AnnotationTask], tasks_path: str, key_path: str):
    with open(tasks_path, "w", encoding="utf-8") as fh:
        for task in tasks:
            obj = {
                "task_id": task.task_id,
                "reward_usd": task.reward_usd,
                "items": [
                    {"target": it.target, "question": it.question, "answer": it.answer}
                    for it in task.items
                ],
            }
            fh.write(json.dumps(obj, ensure_ascii=False, sort_keys=True) + "\n")
    key = {
        str(task.task_id): {
            "positive": task.positive_control,
            "negative": task.negative_control,
            "items": [
                {
                    "kind": it.kind,
                    "padding": it.padding,
                    "target_id": it.target_id,
                    "pair_id": it.pair_id,
                }
                for it in task.items
            ],
        }
        for task in tasks
    }
    with open(key_path, "w", encoding="utf-8") as fh:
        json.dump(key, fh, indent=2, sort_keys=True)


def read_tasks(tasks_path: str, key_path: str) -> list[AnnotationTask]:
    with open(key_path, "r", encoding="utf-8") as fh:
        key = json.load(fh)
    tasks = []
    with open(tasks_path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            obj = json.loads(raw)
            task_id = int(obj["task_id"])
            meta = key.get(str(task_id))
            if meta is None:
                raise DatasetError(f"task {task_id} missing from answer key", line=line_no)
            items = tuple(
                TaskItem(
                    target=item["target"],
                    question=item["question"],
                    answer=item["answer"],
                    kind=item_meta["kind"],
                    target_id=item_meta.get("target_id"),
                    pair_id=item_meta.get("pair_id"),
                    padding=bool(item_meta.get("padding")),
                )
                for item, item_meta in zip(obj["items"], meta["items"])
            )
            tasks.append(
                AnnotationTask(
                    task_id=task_id,
                    items=items,
                    positive_control=int(meta["positive"]),
                    negative_control=int(meta["negative"]),
                    reward_usd=float(obj.get("reward_usd", REWARD_USD)),
                )
            )
    return tasks


def read_judgments(path: str) -> list[Judgment]:
    judgments = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"task_id", "worker_id", "labels"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise DatasetError(f"judgment CSV needs columns {sorted(required)}")
        for row_no, row in enumerate(reader, start=2):
            raw = row["labels"].strip()
            if len(raw) != TASK_SIZE or any(ch not in "01" for ch in raw):
                raise DatasetError(
                    f"labels must be {TASK_SIZE} characters of 0/1, got {raw!r}", line=row_no
                )
            judgments.append(
                Judgment(
                    worker_id=row["worker_id"],
                    task_id=int(row["task_id"]),
                    labels=tuple(int(ch) for ch in raw),
                    submitted_at=float(row.get("submitted_at") or 0.0),
                )
            )
    return judgments


def write_judgments(judgments: Sequence[Judgment], path: str):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["task_id", "worker_id", "labels"])
        for j in judgments:
            writer.writerow([j.task_id, j.worker_id, "".join(str(l) for l in j.labels)])


def collect_item_labels(
    tasks: Sequence[AnnotationTask], judgments: Sequence[Judgment]
) -> dict[tuple[int, int], list[int]]:
    """Validate every judgment, drop blacklisted workers, and gather the
    surviving per-candidate label lists keyed by (target_id, pair_id)."""
    by_id = {task.task_id: task for task in tasks}
    ledger = WorkerLedger()
    statuses: dict[tuple[str, int], JudgmentStatus] = {}
    for judgment in judgments:
        task = by_id.get(judgment.task_id)
        if task is None:
            raise DatasetError(f"judgment references unknown task {judgment.task_id}")
        statuses[(judgment.worker_id, judgment.task_id)] = validate_judgment(
            task, judgment, ledger
        )
    blacklisted, _ = apply_blacklist(ledger, judgments)
    labels: dict[tuple[int, int], list[int]] = {}
    for judgment in judgments:
        if judgment.worker_id in blacklisted:
            continue
        if statuses[(judgment.worker_id, judgment.task_id)] is not JudgmentStatus.ACCEPTED:
            continue
        task = by_id[judgment.task_id]
        for position, item in enumerate(task.items):
            if item.kind != "real":
                continue
            key = (item.target_id, item.pair_id)
            labels.setdefault(key, []).append(judgment.labels[position])
    return labels


def write_targets(targets: Sequence[AnnotatedTarget], path: str):
    with open(path, "w", encoding="utf-8") as fh:
        for target in targets:
            obj = {
                "target_id": target.target_id,
                "target": target.target,
                "candidates": [
                    {"pair_id": p, "question": q, "answer": a} for p, q, a in target.candidates
                ],
            }
            fh.write(json.dumps(obj, ensure_ascii=False, sort_keys=True) + "\n")


def read_targets(path: str) -> list[AnnotatedTarget]:
    targets = []
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            obj = json.loads(raw)
            targets.append(
                AnnotatedTarget(
                    target_id=int(obj["target_id"]),
                    target=obj["target"],
                    candidates=tuple(
                        (int(c["pair_id"]), c["question"], c["answer"])
                        for c in obj["candidates"]
                    ),
                )
            )
    return targets
