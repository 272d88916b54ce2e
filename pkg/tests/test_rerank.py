import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qadb.errors import TransportError
from qadb.rerank import (
    ReferenceScorer,
    RemoteScorer,
    Scorer,
    Triplet,
    build_input,
    make_scorer,
    rerank,
    select_answer,
)

from helpers import StubModelServer


class TestBuildInput:
    def test_qaq_answer_precedes_question(self):
        si = build_input(
            "QAQ", "who wrote hamlet", "who is the author of hamlet", "William Shakespeare"
        )
        assert [role for role, _ in si.segments] == ["target", "answer", "question"]
        assert si.segments[1][1] == "William Shakespeare"

    def test_qq_has_no_answer(self):
        si = build_input("QQ", "who wrote hamlet", "who is the author of hamlet", "anything")
        assert [role for role, _ in si.segments] == ["target", "question"]

    def test_qqa_order(self):
        si = build_input("QQA", "t", "q", "a")
        assert [text for _, text in si.segments] == ["t", "q", "a"]

    def test_qa_skips_question(self):
        si = build_input("QA", "t", "", "a")
        assert [role for role, _ in si.segments] == ["target", "answer"]

    def test_qqa_empty_answer_rejected(self):
        with pytest.raises(ValueError):
            build_input("QQA", "t", "q", "  ")

    def test_empty_target_rejected(self):
        with pytest.raises(ValueError):
            build_input("QQ", "", "q", "a")

    def test_unknown_layout(self):
        with pytest.raises(ValueError):
            build_input("AQQ", "t", "q", "a")


class TestReferenceScorer:
    def test_identical_questions_score_one(self):
        scorer = ReferenceScorer()
        assert scorer.score("QQ", Triplet("what is this", "what is this", "")) == 1.0

    def test_disjoint_tokens_score_zero(self):
        scorer = ReferenceScorer()
        assert scorer.score("QQ", Triplet("alpha beta", "gamma delta", "")) == 0.0

    def test_hand_jaccard(self):
        scorer = ReferenceScorer()
        assert scorer.score("QQ", Triplet("a b c", "a b d", "")) == pytest.approx(0.5)

    def test_qq_ignores_answer(self):
        scorer = ReferenceScorer()
        t = "what is this"
        assert scorer.score("QQ", Triplet(t, "what was that", "first answer")) == scorer.score(
            "QQ", Triplet(t, "what was that", "completely different words")
        )

    def test_deterministic(self):
        scorer = ReferenceScorer()
        triplet = Triplet("a b c", "b c d", "c d e")
        assert scorer.score("QAQ", triplet) == scorer.score("QAQ", triplet)

    def test_answer_tokens_join_the_union_in_qqa(self):
        scorer = ReferenceScorer()
        with_overlap = scorer.score("QQA", Triplet("a b", "a b", "a b"))
        diluted = scorer.score("QQA", Triplet("a b", "a b", "x y z"))
        assert with_overlap == 1.0
        assert diluted < 1.0


def make_candidates(n, rng):
    words = "alpha beta gamma delta epsilon zeta eta theta iota kappa".split()
    return [
        (
            i,
            " ".join(rng.sample(words, rng.randint(2, 5))),
            " ".join(rng.sample(words, rng.randint(1, 4))),
        )
        for i in range(n)
    ]


class TestRerank:
    def test_single_candidate(self):
        ranked = rerank(ReferenceScorer(), "QAQ", "anything", [(9, "unrelated", "words")])
        assert len(ranked) == 1
        assert ranked[0].pair_id == 9

    def test_verbatim_candidate_wins(self):
        rng = random.Random(0)
        candidates = make_candidates(20, rng) + [(99, "the exact target question", "yes")]
        ranked = rerank(ReferenceScorer(), "QQ", "the exact target question", candidates)
        assert ranked[0].pair_id == 99

    def test_output_is_permutation(self):
        rng = random.Random(1)
        candidates = make_candidates(30, rng)
        ranked = rerank(ReferenceScorer(), "QAQ", "alpha beta gamma", candidates)
        assert sorted(c.pair_id for c in ranked) == sorted(c[0] for c in candidates)

    def test_empty_candidates_rejected(self):
        with pytest.raises(ValueError):
            rerank(ReferenceScorer(), "QQ", "t", [])

    def test_monotone_transform_keeps_order(self):
        class Transformed(Scorer):
            def __init__(self, inner, fn):
                self.inner, self.fn = inner, fn

            def score_batch(self, layout, triplets):
                return [self.fn(s) for s in self.inner.score_batch(layout, triplets)]

        rng = random.Random(2)
        candidates = make_candidates(25, rng)
        base = rerank(ReferenceScorer(), "QAQ", "alpha beta gamma delta", candidates)
        for fn in (lambda s: 3 * s + 7, math.exp, lambda s: s**3 + s):
            transformed = rerank(
                Transformed(ReferenceScorer(), fn), "QAQ", "alpha beta gamma delta", candidates
            )
            assert [c.pair_id for c in transformed] == [c.pair_id for c in base]
            assert select_answer(transformed)[0] == select_answer(base)[0]

    def test_ties_break_by_ascending_pair_id(self):
        class Constant(Scorer):
            def score_batch(self, layout, triplets):
                return [0.5] * len(triplets)

        ranked = rerank(Constant(), "QQ", "t", [(5, "q", "a"), (1, "q2", "a"), (3, "q3", "a")])
        assert [c.pair_id for c in ranked] == [1, 3, 5]

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31), st.integers(2, 25))
    def test_permutation_property(self, seed, n):
        rng = random.Random(seed)
        candidates = make_candidates(n, rng)
        target = " ".join(rng.sample("alpha beta gamma delta epsilon".split(), 3))
        ranked = rerank(ReferenceScorer(), "QAQ", target, candidates)
        assert sorted(c.pair_id for c in ranked) == list(range(n))
        scores = [c.score for c in ranked]
        assert all(a >= b for a, b in zip(scores, scores[1:]))


class TestSelectAnswer:
    def ranked(self):
        return rerank(
            ReferenceScorer(),
            "QQ",
            "a b c",
            [(0, "a b c", "right answer"), (1, "a x y", "other"), (2, "z z z", "noise")],
        )

    def test_top_answer(self):
        answer, pair_id, score = select_answer(self.ranked())
        assert answer == "right answer"
        assert pair_id == 0
        assert score == 1.0

    def test_threshold_above_all_scores(self):
        assert select_answer(self.ranked(), threshold=2.0) is None

    def test_threshold_disabled_always_answers(self):
        assert select_answer(self.ranked(), threshold=None) is not None

    def test_empty_ranking(self):
        assert select_answer([]) is None


class TestRemoteScorer:
    def test_matches_reference(self):
        with StubModelServer(dim=32) as server:
            remote = RemoteScorer(server.url, batch_size=4)
            local = ReferenceScorer()
            triplets = [Triplet("a b c", f"a b x{i}", f"ans {i}") for i in range(10)]
            assert remote.score_batch("QAQ", triplets) == pytest.approx(
                local.score_batch("QAQ", triplets)
            )

    def test_backend_down(self):
        remote = RemoteScorer("http://127.0.0.1:9", retries=0, timeout=0.2)
        with pytest.raises(TransportError):
            remote.score("QQ", Triplet("t", "q", "a"))

    def test_make_scorer(self):
        assert isinstance(make_scorer("ref"), ReferenceScorer)
        assert isinstance(make_scorer("remote:http://x"), RemoteScorer)
        with pytest.raises(ValueError):
            make_scorer("nope")
