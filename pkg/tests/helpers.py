"""Shared test fixtures: the paraphrase-cluster corpus, a scripted
annotation-worker simulation, and a stub HTTP model backend."""

from __future__ import annotations

import json
import random
import string
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from qadb.annotation import (
    AnnotationTask,
    ControlTriplet,
    Judgment,
    RealTriplet,
)
from qadb.encoder import ReferenceEncoder
from qadb.rerank import ReferenceScorer, Triplet
from qadb.store import QAStore, SourceConfig

FILLER = (
    "what how why is the a of in to for can does did where when which "
    "people time world good way many much long often"
).split()


@dataclass
class ClusterFixture:
    """1,000 stored pairs: 10 paraphrase clusters of 5 members each plus
    950 distractors, with 5 held-out paraphrase queries per cluster."""

    store: QAStore
    queries: list[tuple[int, str]] = field(default_factory=list)  # (cluster, question)
    cluster_pair_ids: dict[int, set[int]] = field(default_factory=dict)


def _phrase(rng: random.Random, content: list[str], n_content: int, n_filler: int) -> str:
    words = rng.sample(content, n_content) + rng.sample(FILLER, n_filler)
    rng.shuffle(words)
    return " ".join(words) + "?"


def build_cluster_fixture(
    store_path: str,
    seed: int = 11,
    n_clusters: int = 10,
    members: int = 5,
    queries_per_cluster: int = 5,
    n_pairs: int = 1000,
) -> ClusterFixture:
    rng = random.Random(seed)

    def word():
        return "".join(rng.choice(string.ascii_lowercase) for _ in range(rng.randint(6, 9)))

    # Cluster vocabularies are random words, so clusters share no stems
    # (and essentially no trigrams) with each other or the distractors.
    seen: set[str] = set()

    def fresh_word():
        while True:
            w = word()
            if w not in seen:
                seen.add(w)
                return w

    cluster_vocab = [[fresh_word() for _ in range(10)] for _ in range(n_clusters)]
    distractor_vocab = [fresh_word() for _ in range(2000)]

    records = []
    member_questions: dict[int, list[str]] = {}
    queries: list[tuple[int, str]] = []
    for c in range(n_clusters):
        member_questions[c] = []
        for m in range(members):
            q = _phrase(rng, cluster_vocab[c], 6, 3)
            a = f"group {c} answer {m}: " + " ".join(rng.sample(cluster_vocab[c], 4))
            member_questions[c].append(q)
            records.append({"question": q, "answer": a, "cluster": c})
        for _ in range(queries_per_cluster):
            queries.append((c, _phrase(rng, cluster_vocab[c], 6, 3)))
    n_distractors = n_pairs - n_clusters * members
    for i in range(n_distractors):
        q = _phrase(rng, distractor_vocab, 8, 3)
        a = "noise " + " ".join(rng.sample(distractor_vocab, 6))
        records.append({"question": q, "answer": a, "cluster": None})
    rng.shuffle(records)

    store = QAStore(store_path)
    store.ingest(
        ({"question": r["question"], "answer": r["answer"]} for r in records),
        SourceConfig("fixture"),
    )
    by_question = {r["question"]: r["cluster"] for r in records}
    cluster_pair_ids: dict[int, set[int]] = {c: set() for c in range(n_clusters)}
    for pair in store.export_pairs():
        cluster = by_question[pair.question]
        if cluster is not None:
            cluster_pair_ids[cluster].add(pair.id)
    return ClusterFixture(store=store, queries=queries, cluster_pair_ids=cluster_pair_ids)


def brute_force_check(fixture: ClusterFixture, encoder: ReferenceEncoder, layout: str = "QAQ"):
    """Validate the fixture with oracles that bypass index and reranker:
    per query, both the highest direct-cosine pair (question encoding)
    and the highest Jaccard-overlap pair must be in the query's cluster."""
    scorer = ReferenceScorer()
    pairs = list(fixture.store.export_pairs())
    vectors = np.stack([encoder.encode_query(p.question) for p in pairs])
    for cluster, query in fixture.queries:
        qv = encoder.encode_query(query)
        sims = vectors @ qv
        best_cos = pairs[int(np.argmax(sims))]
        assert best_cos.id in fixture.cluster_pair_ids[cluster], (
            f"cosine oracle: best pair for {query!r} is out of cluster {cluster}"
        )
        overlaps = scorer.score_batch(
            layout, [Triplet(query, p.question, p.answer) for p in pairs]
        )
        best_overlap = pairs[int(np.argmax(overlaps))]
        assert best_overlap.id in fixture.cluster_pair_ids[cluster], (
            f"overlap oracle: best pair for {query!r} is out of cluster {cluster}"
        )


# -- annotation simulation -------------------------------------------------


@dataclass(frozen=True)
class SimWorker:
    worker_id: str
    control_error_rate: float
    label_error_rate: float = 0.0


def simulate_judgments(
    tasks: list[AnnotationTask],
    workers: list[SimWorker],
    truth: dict[tuple[int, int], int],
    seed: int,
    per_task: int = 2,
) -> list[Judgment]:
    """Deterministic scripted workers: each task is judged by `per_task`
    workers (round-robin); a worker flips control answers at their
    planted control_error_rate and real labels at label_error_rate."""
    rng = random.Random(seed)
    judgments = []
    for t_index, task in enumerate(tasks):
        for w_offset in range(per_task):
            worker = workers[(t_index + w_offset) % len(workers)]
            labels = []
            for position, item in enumerate(task.items):
                if item.kind == "control_positive":
                    correct = 1
                elif item.kind == "control_negative":
                    correct = 0
                else:
                    correct = truth.get((item.target_id, item.pair_id), 0)
                flip_rate = (
                    worker.control_error_rate
                    if item.kind != "real"
                    else worker.label_error_rate
                )
                label = correct if rng.random() >= flip_rate else 1 - correct
                labels.append(label)
            judgments.append(
                Judgment(worker_id=worker.worker_id, task_id=task.task_id, labels=tuple(labels))
            )
    return judgments


def toy_annotation_inputs(n_targets: int = 6, candidates_per_target: int = 30, seed: int = 3):
    """Real triplets + controls + pool + ground truth for protocol tests."""
    rng = random.Random(seed)
    real = []
    truth = {}
    for target_id in range(n_targets):
        target = f"how does widget {target_id} work?"
        for pair_id in range(candidates_per_target):
            label = 1 if rng.random() < 0.25 else 0
            truth[(target_id, pair_id + target_id * 1000)] = label
            real.append(
                RealTriplet(
                    target_id=target_id,
                    target=target,
                    pair_id=pair_id + target_id * 1000,
                    question=f"candidate {pair_id} for widget {target_id}",
                    answer=f"candidate answer {pair_id}",
                )
            )
    controls = [
        ControlTriplet("what color is the sky?", "which color does the sky have?", "blue"),
        ControlTriplet("what do cows drink?", "what liquid do cows consume?", "water"),
    ]
    pool = [(f"pool question {i}?", f"pool answer {i}") for i in range(20)]
    return real, controls, pool, truth


# -- stub remote model backend ----------------------------------------------


class StubModelServer:
    """Minimal HTTP backend speaking the /encode, /score, /health protocol,
    backed by the deterministic reference encoder and scorer."""

    def __init__(self, dim: int = 64, seed: int = 0, fail_after: int | None = None):
        encoder = ReferenceEncoder(dim=dim, seed=seed)
        scorer = ReferenceScorer()
        state = {"calls": 0}

        class Handler(BaseHTTPRequestHandler):
            def _send(self, status, payload):
                body = json.dumps(payload).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def do_GET(self):
                if self.path == "/health":
                    self._send(200, {"status": "ok", "dim": encoder.dim})
                else:
                    self._send(404, {"error": "not found"})

            def do_POST(self):
                state["calls"] += 1
                if fail_after is not None and state["calls"] > fail_after:
                    self._send(500, {"error": "planted failure"})
                    return
                length = int(self.headers.get("Content-Length", "0"))
                body = json.loads(self.rfile.read(length))
                if self.path == "/encode":
                    mode = body["mode"]
                    vectors = []
                    for item in body["items"]:
                        if mode == "query":
                            vec = encoder.encode_query(item["query"])
                        else:
                            vec = encoder.encode_pair(item["question"], item["answer"])
                        vectors.append([float(x) for x in vec])
                    self._send(200, {"dim": encoder.dim, "vectors": vectors})
                elif self.path == "/score":
                    triplets = [
                        Triplet(i["target"], i.get("question", ""), i.get("answer", ""))
                        for i in body["items"]
                    ]
                    scores = scorer.score_batch(body["layout"], triplets)
                    self._send(200, {"scores": scores})
                else:
                    self._send(404, {"error": "not found"})

            def log_message(self, fmt, *args):
                pass

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    @property
    def url(self) -> str:
        return f"http://127.0.0.1:{self._server.server_address[1]}"

    def __enter__(self):
        self._thread.start()
        return self

    def __exit__(self, *exc):
        self._server.shutdown()
        self._server.server_close()
