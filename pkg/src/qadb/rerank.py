"""Triplet scoring over retrieved candidates and final answer selection.

A triplet is (target question, candidate question, candidate answer).
The input configuration decides which fields reach the scorer and in
what order:

    QQ   (target, question)            question-question similarity only
    QA   (target, answer)              plain answer selection
    QQA  (target, question, answer)    answer as trailing context
    QAQ  (target, answer, question)    question as trailing context

Scores are unconstrained reals (remote models emit logits); only the
reference scorer happens to stay in [0, 1]. Ranking ties break by
ascending pair id, matching the vector index.

Remote wire protocol (shared with any model server):
    POST {base_url}/score
    request  {"layout": "QAQ", "items": [{"target": t, "question": q, "answer": a}, ...]}
    response {"scores": [f64, ...]}  in request order
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import requests

from .errors import TransportError

LAYOUTS = ("QQ", "QA", "QQA", "QAQ")

# Scorer segment order per layout, after the leading target.
_LAYOUT_TAIL = {
    "QQ": ("question",),
    "QA": ("answer",),
    "QQA": ("question", "answer"),
    "QAQ": ("answer", "question"),
}


@dataclass(frozen=True)
class Triplet:
    target: str
    question: str
    answer: str


@dataclass(frozen=True)
class ScorerInput:
    """Ordered role-tagged segments fed to a cross-encoder scorer."""

    layout: str
    segments: tuple[tuple[str, str], ...]


@dataclass(frozen=True)
class RankedCandidate:
    pair_id: int
    triplet: Triplet
    score: float


def check_layout(layout: str) -> str:
    if layout not in LAYOUTS:
        raise ValueError(f"unknown layout {layout!r}, expected one of {LAYOUTS}")
    return layout


def build_input(layout: str, target: str, question: str, answer: str) -> ScorerInput:
    """Arrange the triplet fields in the layout's scorer order.

    Fields the layout feeds to the scorer must be non-empty; unused
    fields (the answer in QQ, the question in QA) may be blank.
    """
    check_layout(layout)
    if not target.strip():
        raise ValueError("target question is empty")
    values = {"question": question, "answer": answer}
    segments = [("target", target)]
    for role in _LAYOUT_TAIL[layout]:
        if not values[role].strip():
            raise ValueError(f"layout {layout} requires a non-empty {role}")
        segments.append((role, values[role]))
    return ScorerInput(layout, tuple(segments))


class Scorer:
    def score(self, layout: str, triplet: Triplet) -> float:
        return self.score_batch(layout, [triplet])[0]

    def score_batch(self, layout: str, triplets: list[Triplet]) -> list[float]:
        raise NotImplementedError


_TOKEN_RE = re.compile(r"[0-9a-z]+")


def _tokens(text: str) -> frozenset[str]:
    return frozenset(_TOKEN_RE.findall(text.lower()))


class ReferenceScorer(Scorer):
    """Deterministic cross-encoder stand-in: token Jaccard overlap.

    Scores the target's token set against the union of tokens from the
    layout's non-target segments; always in [0, 1].
    """

    def score_batch(self, layout: str, triplets: list[Triplet]) -> list[float]:
        check_layout(layout)
        scores = []
        for triplet in triplets:
            inp = build_input(layout, triplet.target, triplet.question, triplet.answer)
            target_tokens = _tokens(triplet.target)
            other_tokens: frozenset[str] = frozenset()
            for _, text in inp.segments[1:]:
                other_tokens |= _tokens(text)
            union = target_tokens | other_tokens
            scores.append(len(target_tokens & other_tokens) / len(union) if union else 0.0)
        return scores


class RemoteScorer(Scorer):
    """Client for a model server speaking the /score wire protocol."""

    def __init__(self, base_url: str, timeout: float = 60.0, retries: int = 2, batch_size: int = 64):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.retries = retries
        self.batch_size = max(1, batch_size)
        self._session = requests.Session()

    def score_batch(self, layout: str, triplets: list[Triplet]) -> list[float]:
        check_layout(layout)
        scores: list[float] = []
        for start in range(0, len(triplets), self.batch_size):
            chunk = triplets[start : start + self.batch_size]
            body = {
                "layout": layout,
                "items": [
                    {"target": t.target, "question": t.question, "answer": t.answer} for t in chunk
                ],
            }
            url = self.base_url + "/score"
            last_error: Exception | None = None
            payload = None
            for _ in range(self.retries + 1):
                try:
                    resp = self._session.post(url, json=body, timeout=self.timeout)
                    resp.raise_for_status()
                    payload = resp.json()
                    break
                except (requests.RequestException, ValueError) as exc:
                    last_error = exc
            if payload is None:
                raise TransportError(f"scorer backend {url} failed: {last_error}", stage="rerank")
            got = payload.get("scores")
            if got is None or len(got) != len(chunk):
                raise TransportError(
                    f"scorer backend returned {0 if got is None else len(got)} scores "
                    f"for {len(chunk)} items",
                    stage="rerank",
                )
            scores.extend(float(s) for s in got)
        return scores


def rerank(
    scorer: Scorer,
    layout: str,
    target: str,
    candidates: list[tuple[int, str, str]],
) -> list[RankedCandidate]:
    """Score all (pair_id, question, answer) candidates and sort them.

    Output is a permutation of the input: score descending, pair id
    ascending on ties.
    """
    check_layout(layout)
    if not candidates:
        raise ValueError("candidate list is empty")
    triplets = [Triplet(target, q, a) for _, q, a in candidates]
    scores = scorer.score_batch(layout, triplets)
    ranked = [
        RankedCandidate(pair_id, triplet, score)
        for (pair_id, _, _), triplet, score in zip(candidates, triplets, scores)
    ]
    ranked.sort(key=lambda c: (-c.score, c.pair_id))
    return ranked


def select_answer(
    ranked: list[RankedCandidate], threshold: float | None = None
) -> tuple[str, int, float] | None:
    """The rank-1 answer, or None when below the (optional) threshold.

    The threshold is off by default: abstention is not part of the
    evaluated behavior, it is an operational knob.
    """
    if not ranked:
        return None
    top = ranked[0]
    if threshold is not None and top.score < threshold:
        return None
    return top.triplet.answer, top.pair_id, top.score


def make_scorer(spec: str) -> Scorer:
    """Build a scorer from a backend spec: "ref" or "remote:<url>"."""
    if spec == "ref":
        return ReferenceScorer()
    if spec.startswith("remote:"):
        return RemoteScorer(spec[len("remote:") :])
    raise ValueError(f"unknown scorer backend {spec!r} (expected 'ref' or 'remote:<url>')")
