"""End-to-end answer flow: encode the query, retrieve top-k pairs,
rerank the triplets, return the top answer. Each stage is timed with a
monotonic clock so the latency harness can split the budget.

Pipeline objects are immutable after construction and safe to share
across threads; there is no cross-request caching.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from .encoder import Encoder
from .errors import NotFoundError, TransportError
from .index import RetrievalResult, VectorIndex
from .rerank import RankedCandidate, Scorer, Triplet, check_layout, rerank, select_answer
from .store import QAStore

SERVING_K = 500
DATASET_K = 30


@dataclass(frozen=True)
class PipelineConfig:
    k: int = SERVING_K
    layout: str = "QAQ"
    threshold: float | None = None
    use_reranker: bool = True

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        check_layout(self.layout)


@dataclass
class AnswerResponse:
    query: str
    answer: str | None = None
    pair_id: int | None = None
    score: float | None = None
    retrieval: list[RetrievalResult] = field(default_factory=list)
    reranked: list[RankedCandidate] = field(default_factory=list)
    timing: dict[str, int] = field(default_factory=dict)
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "query": self.query,
            "answer": self.answer,
            "pair_id": self.pair_id,
            "score": self.score,
            "retrieval": [{"pair_id": r.pair_id, "score": r.score} for r in self.retrieval],
            "reranked": [
                {"pair_id": c.pair_id, "question": c.triplet.question, "score": c.score}
                for c in self.reranked
            ],
            "timing": dict(self.timing),
            "error": self.error,
        }


class Pipeline:
    def __init__(
        self,
        store: QAStore,
        index: VectorIndex,
        encoder: Encoder,
        scorer: Scorer,
        config: PipelineConfig | None = None,
    ):
        self.store = store
        self.index = index
        self.encoder = encoder
        self.scorer = scorer
        self.config = config or PipelineConfig()

    def answer(self, question: str) -> AnswerResponse:
        """Answer one question; timings in nanoseconds per stage."""
        config = self.config
        t_start = time.perf_counter_ns()
        response = AnswerResponse(query=question)

        query_vec = self.encoder.encode_query(question)
        response.timing["encode_ns"] = time.perf_counter_ns() - t_start

        t0 = time.perf_counter_ns()
        response.retrieval = self.index.search(query_vec, config.k)
        response.timing["retrieve_ns"] = time.perf_counter_ns() - t0

        if not response.retrieval:
            # Empty index: a no-answer response, not an error.
            response.timing["rerank_ns"] = 0
            response.timing["total_ns"] = time.perf_counter_ns() - t_start
            return response

        t0 = time.perf_counter_ns()
        candidates = []
        for result in response.retrieval:
            pair = self.store.get_pair(result.pair_id)
            candidates.append((pair.id, pair.question, pair.answer))
        if config.use_reranker:
            response.reranked = rerank(self.scorer, config.layout, question, candidates)
        else:
            # Ablation mode: keep the retrieval order and scores.
            response.reranked = [
                RankedCandidate(pair_id, Triplet(question, q, a), result.score)
                for (pair_id, q, a), result in zip(candidates, response.retrieval)
            ]
        response.timing["rerank_ns"] = time.perf_counter_ns() - t0

        selected = select_answer(response.reranked, config.threshold)
        if selected is not None:
            response.answer, response.pair_id, response.score = selected
        response.timing["total_ns"] = time.perf_counter_ns() - t_start
        return response

    def answer_batch(self, questions: list[str]) -> list[AnswerResponse]:
        """Element-wise answer(); per-query failures are recorded, not raised."""
        responses = []
        for question in questions:
            try:
                responses.append(self.answer(question))
            except (ValueError, TransportError, NotFoundError) as exc:
                responses.append(AnswerResponse(query=question, error=str(exc)))
        return responses
