"""Persistent question/answer pair store.

Layout on disk: `segments/NNNN.jsonl`, append-only, one JSON object per
line (a pair record or a removal tombstone), plus an `index.json`
cache. The id -> file-offset index is rebuilt from the segments on
open, so the segments are the source of truth.

Writers (ingest, sample-and-remove) are mutually exclusive via a lock
file; reads are lock-free and see a consistent snapshot.
"""

from __future__ import annotations

import json
import math
import os
import random
import threading
import time
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping

from filelock import FileLock

from .errors import ConfigError, NotFoundError


def normalize_text(text: str) -> str:
    """Dedup normalization: lowercase + whitespace collapse, nothing else."""
    return " ".join(text.lower().split())


@dataclass(frozen=True)
class QAPair:
    id: int
    question: str
    answer: str
    source: str
    quality_score: float | None
    ingested_at: float

    def to_record(self) -> dict:
        record = {
            "id": self.id,
            "question": self.question,
            "answer": self.answer,
            "source": self.source,
            "ingested_at": self.ingested_at,
        }
        if self.quality_score is not None:
            record["score"] = self.quality_score
        return record

    @classmethod
    def from_record(cls, record: dict) -> "QAPair":
        return cls(
            id=int(record["id"]),
            question=record["question"],
            answer=record["answer"],
            source=record["source"],
            quality_score=record.get("score"),
            ingested_at=float(record.get("ingested_at", 0.0)),
        )


@dataclass(frozen=True)
class SourceConfig:
    name: str
    keep_fraction: float = 1.0
    requires_score: bool = False

    def __post_init__(self):
        if not self.name:
            raise ConfigError("source name must be non-empty")
        if not 0.0 < self.keep_fraction <= 1.0:
            raise ConfigError(f"keep_fraction must be in (0, 1], got {self.keep_fraction}")
        if self.keep_fraction < 1.0 and not self.requires_score:
            raise ConfigError("keep_fraction < 1.0 requires scored records (requires_score=True)")


@dataclass
class IngestReport:
    read: int = 0
    kept: int = 0
    dropped_filter: int = 0
    dropped_duplicate: int = 0
    dropped_invalid: int = 0


class QAStore:
    def __init__(self, path: str):
        self.path = path
        self.segments_dir = os.path.join(path, "segments")
        os.makedirs(self.segments_dir, exist_ok=True)
        self._write_lock = FileLock(os.path.join(path, "write.lock"))
        self._mutex = threading.RLock()
        # id -> (segment path, byte offset); rebuilt from segments on open.
        self._locations: dict[int, tuple[str, int]] = {}
        self._dedup: set[tuple[str, str]] = set()
        self._source_counts: Counter[str] = Counter()
        self._next_id = 0
        self._dedup_key_by_id: dict[int, tuple[str, str]] = {}
        self._reload()

    # -- startup ---------------------------------------------------------

    def _segment_files(self) -> list[str]:
        names = sorted(n for n in os.listdir(self.segments_dir) if n.endswith(".jsonl"))
        return [os.path.join(self.segments_dir, n) for n in names]

    def _reload(self):
        self._locations.clear()
        self._dedup.clear()
        self._dedup_key_by_id.clear()
        self._source_counts.clear()
        self._next_id = 0
        for seg in self._segment_files():
            with open(seg, "rb") as fh:
                offset = 0
                for raw in fh:
                    record = json.loads(raw)
                    pair_id = int(record["id"])
                    self._next_id = max(self._next_id, pair_id + 1)
                    if record.get("removed"):
                        self._forget(pair_id)
                    else:
                        key = (normalize_text(record["question"]), normalize_text(record["answer"]))
                        self._locations[pair_id] = (seg, offset)
                        self._dedup.add(key)
                        self._dedup_key_by_id[pair_id] = key
                        self._source_counts[record["source"]] += 1
                    offset += len(raw)
        self._write_index_cache()

    def _forget(self, pair_id: int):
        location = self._locations.pop(pair_id, None)
        if location is None:
            return
        key = self._dedup_key_by_id.pop(pair_id)
        self._dedup.discard(key)
        pair = self._read_at(location)
        self._source_counts[pair.source] -= 1
        if self._source_counts[pair.source] <= 0:
            del self._source_counts[pair.source]

    def _write_index_cache(self):
        cache = {
            "next_id": self._next_id,
            "locations": {str(i): [seg, off] for i, (seg, off) in self._locations.items()},
        }
        with open(os.path.join(self.path, "index.json"), "w", encoding="utf-8") as fh:
            json.dump(cache, fh)

    # -- low-level io ------------------------------------------------------

    def _read_at(self, location: tuple[str, int]) -> QAPair:
        seg, offset = location
        with open(seg, "rb") as fh:
            fh.seek(offset)
            return QAPair.from_record(json.loads(fh.readline()))

    def _new_segment(self, lines: list[dict]) -> tuple[str, list[int]]:
        number = 0
        existing = self._segment_files()
        if existing:
            number = int(os.path.basename(existing[-1]).split(".")[0]) + 1
        seg = os.path.join(self.segments_dir, f"{number:04d}.jsonl")
        offsets = []
        with open(seg, "wb") as fh:
            for record in lines:
                offsets.append(fh.tell())
                fh.write(json.dumps(record, ensure_ascii=False).encode("utf-8") + b"\n")
            fh.flush()
            os.fsync(fh.fileno())
        return seg, offsets

    # -- operations --------------------------------------------------------

    def ingest(self, records: Iterable[Mapping], config: SourceConfig) -> IngestReport:
        """Filter, dedup, and append one batch of raw q/a records.

        The percentile filter is applied within this batch: the
        ceil(keep_fraction * valid) highest-scoring records survive,
        ties broken by record order. Malformed records are counted and
        skipped; a missing score when the source requires one rejects
        the whole batch before anything is written.
        """
        report = IngestReport()
        valid: list[dict] = []
        for raw in records:
            report.read += 1
            parsed = self._parse_record(raw, config)
            if parsed is None:
                report.dropped_invalid += 1
            else:
                valid.append(parsed)
        if config.requires_score:
            for record in valid:
                if record["score"] is None:
                    raise ConfigError(
                        f"source {config.name!r} requires a quality score on every record"
                    )

        keep_flags = [True] * len(valid)
        if config.keep_fraction < 1.0 and valid:
            n_keep = math.ceil(config.keep_fraction * len(valid))
            ranked = sorted(range(len(valid)), key=lambda i: (-valid[i]["score"], i))
            keep_flags = [False] * len(valid)
            for i in ranked[:n_keep]:
                keep_flags[i] = True

        with self._write_lock, self._mutex:
            batch_keys: set[tuple[str, str]] = set()
            appended: list[dict] = []
            now = time.time()
            for record, keep in zip(valid, keep_flags):
                if not keep:
                    report.dropped_filter += 1
                    continue
                key = (normalize_text(record["question"]), normalize_text(record["answer"]))
                if key in self._dedup or key in batch_keys:
                    report.dropped_duplicate += 1
                    continue
                batch_keys.add(key)
                pair = QAPair(
                    id=self._next_id + len(appended),
                    question=record["question"],
                    answer=record["answer"],
                    source=record["source"],
                    quality_score=record["score"],
                    ingested_at=now,
                )
                appended.append(pair.to_record())
                report.kept += 1
            if appended:
                seg, offsets = self._new_segment(appended)
                for record, offset in zip(appended, offsets):
                    pair_id = record["id"]
                    key = (normalize_text(record["question"]), normalize_text(record["answer"]))
                    self._locations[pair_id] = (seg, offset)
                    self._dedup.add(key)
                    self._dedup_key_by_id[pair_id] = key
                    self._source_counts[record["source"]] += 1
                self._next_id += len(appended)
                self._write_index_cache()
        return report

    def _parse_record(self, raw, config: SourceConfig) -> dict | None:
        if not isinstance(raw, Mapping):
            return None
        question = raw.get("question")
        answer = raw.get("answer")
        if not isinstance(question, str) or not question.strip():
            return None
        if not isinstance(answer, str):
            return None
        score = raw.get("score")
        if score is not None:
            if not isinstance(score, (int, float)) or isinstance(score, bool):
                return None
            score = float(score)
            if not 0.0 <= score <= 1.0:
                return None
        source = raw.get("source") or config.name
        if not isinstance(source, str):
            return None
        return {"question": question, "answer": answer, "score": score, "source": source}

    def get_pair(self, pair_id: int) -> QAPair:
        location = self._locations.get(pair_id)
        if location is None:
            raise NotFoundError(f"no pair with id {pair_id}")
        return self._read_at(location)

    def sample(self, n: int, seed: int, remove: bool = True) -> list[QAPair]:
        """Uniform sample of n pairs under `seed`; removes them when asked.

        Deterministic: identical store state + seed gives an identical
        sample, so held-out question sets are reproducible.
        """
        with self._write_lock, self._mutex:
            live = sorted(self._locations)
            if n > len(live):
                raise ValueError(f"cannot sample {n} pairs from a store of {len(live)}")
            chosen = random.Random(seed).sample(live, n)
            pairs = [self.get_pair(i) for i in chosen]
            if remove:
                tombstones = [{"id": i, "removed": True} for i in chosen]
                if tombstones:
                    self._new_segment(tombstones)
                for pair_id in chosen:
                    self._forget(pair_id)
                self._write_index_cache()
        return pairs

    def sample_and_remove(self, n: int, seed: int) -> list[QAPair]:
        return self.sample(n, seed, remove=True)

    def export_pairs(self, source: str | None = None) -> Iterator[QAPair]:
        """All live pairs in id order, optionally restricted to one source."""
        with self._mutex:
            if source is not None and source not in self._source_counts:
                raise ValueError(f"unknown source {source!r}")
            ids = sorted(self._locations)
        for pair_id in ids:
            location = self._locations.get(pair_id)
            if location is None:
                continue
            pair = self._read_at(location)
            if source is None or pair.source == source:
                yield pair

    def __len__(self) -> int:
        return len(self._locations)

    @property
    def sources(self) -> set[str]:
        return set(self._source_counts)
