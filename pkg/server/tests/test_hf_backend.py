"""Exercises the transformers code path with a tiny randomly initialized
checkpoint written to disk, standing in for a user-supplied model."""

import string

import numpy as np
import pytest

torch = pytest.importorskip("torch")
transformers = pytest.importorskip("transformers")

from fastapi.testclient import TestClient

from qaserve.app import create_app
from qaserve.config import ServerConfig

HIDDEN = 32
MAX_LEN = 64


@pytest.fixture(scope="module")
def tiny_model_dir(tmp_path_factory):
    from transformers import BertConfig, BertForSequenceClassification, BertModel, BertTokenizerFast

    root = tmp_path_factory.mktemp("tiny_models")
    vocab = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
    vocab += list(string.ascii_lowercase) + list(string.digits)
    vocab += [f"##{ch}" for ch in string.ascii_lowercase + string.digits]
    vocab_file = root / "vocab.txt"
    vocab_file.write_text("\n".join(vocab) + "\n", encoding="utf-8")
    tokenizer = BertTokenizerFast(vocab_file=str(vocab_file), do_lower_case=True)

    torch.manual_seed(0)
    config = BertConfig(
        vocab_size=len(vocab),
        hidden_size=HIDDEN,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=64,
        max_position_embeddings=MAX_LEN,
    )
    encoder_dir = root / "encoder"
    BertModel(config).eval().save_pretrained(encoder_dir)
    tokenizer.save_pretrained(encoder_dir)

    scorer_config = BertConfig(
        vocab_size=len(vocab),
        hidden_size=HIDDEN,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=64,
        max_position_embeddings=MAX_LEN,
        num_labels=1,
    )
    scorer_dir = root / "scorer"
    BertForSequenceClassification(scorer_config).eval().save_pretrained(scorer_dir)
    tokenizer.save_pretrained(scorer_dir)
    return str(encoder_dir), str(scorer_dir)


@pytest.fixture(scope="module")
def hf_client(tiny_model_dir):
    encoder_dir, scorer_dir = tiny_model_dir
    config = ServerConfig(
        encoder=f"hf:{encoder_dir}", scorer=f"hf:{scorer_dir}", max_seq_len=MAX_LEN
    )
    return TestClient(create_app(config))


class TestTransformersEncoder:
    def test_health_reports_hidden_size(self, hf_client):
        assert hf_client.get("/health").json() == {"status": "ok", "dim": HIDDEN}

    def test_unit_norm(self, hf_client):
        resp = hf_client.post(
            "/encode",
            json={"mode": "query", "items": [{"query": "what color is the sun"}]},
        )
        vec = np.asarray(resp.json()["vectors"][0])
        assert vec.shape == (HIDDEN,)
        assert abs(np.linalg.norm(vec) - 1.0) < 1e-5

    def test_deterministic(self, hf_client):
        body = {"mode": "pair", "items": [{"question": "koalas eat what", "answer": "eucalyptus"}]}
        a = hf_client.post("/encode", json=body).json()["vectors"]
        b = hf_client.post("/encode", json=body).json()["vectors"]
        assert np.allclose(a, b, atol=1e-5)

    def test_pair_uses_separator_not_concatenation(self, hf_client):
        # splitting the same text differently across the separator must
        # change the encoding
        a = hf_client.post(
            "/encode",
            json={"mode": "pair", "items": [{"question": "abc def", "answer": "ghi"}]},
        ).json()["vectors"][0]
        b = hf_client.post(
            "/encode",
            json={"mode": "pair", "items": [{"question": "abc", "answer": "def ghi"}]},
        ).json()["vectors"][0]
        assert not np.allclose(a, b, atol=1e-6)

    def test_long_inputs_are_truncated_not_rejected(self, hf_client):
        long_text = "word " * 500
        resp = hf_client.post(
            "/encode", json={"mode": "query", "items": [{"query": long_text}]}
        )
        assert resp.status_code == 200


class TestTransformersScorer:
    def test_scores_shape_and_order(self, hf_client):
        items = [
            {"target": "aaa bbb", "question": f"aaa {i}", "answer": "ccc"} for i in range(5)
        ]
        resp = hf_client.post("/score", json={"layout": "QAQ", "items": items})
        assert resp.status_code == 200
        scores = resp.json()["scores"]
        assert len(scores) == 5
        singles = [
            hf_client.post("/score", json={"layout": "QAQ", "items": [item]}).json()["scores"][0]
            for item in items
        ]
        assert np.allclose(scores, singles, atol=1e-4)

    def test_qq_is_answer_independent(self, hf_client):
        a = hf_client.post(
            "/score",
            json={"layout": "QQ", "items": [{"target": "abc", "question": "abd", "answer": "one"}]},
        ).json()["scores"]
        b = hf_client.post(
            "/score",
            json={"layout": "QQ", "items": [{"target": "abc", "question": "abd", "answer": "two"}]},
        ).json()["scores"]
        assert a == b

    def test_layout_changes_the_score(self, hf_client):
        item = {"target": "abc def", "question": "ghi jkl", "answer": "mno pqr"}
        by_layout = {
            layout: hf_client.post("/score", json={"layout": layout, "items": [item]}).json()[
                "scores"
            ][0]
            for layout in ("QQ", "QA", "QQA", "QAQ")
        }
        assert len(set(by_layout.values())) > 1

    def test_overlong_triplets_are_truncated(self, hf_client):
        item = {"target": "tgt " * 200, "question": "q " * 200, "answer": "a " * 200}
        resp = hf_client.post("/score", json={"layout": "QAQ", "items": [item]})
        assert resp.status_code == 200
