"""Model backends for the /encode and /score endpoints.

Two families: weight-free deterministic backends (hashing encoder,
token-overlap scorer) for wiring and testing, and transformers-based
backends for real checkpoints. Inference is always deterministic: eval
mode, no dropout, no sampling.
"""

from __future__ import annotations

import hashlib
import re

import numpy as np

from .config import ServerConfig

LAYOUTS = ("QQ", "QA", "QQA", "QAQ")

# Scorer segment order after the leading target, per input configuration.
LAYOUT_TAIL = {
    "QQ": ("question",),
    "QA": ("answer",),
    "QQA": ("question", "answer"),
    "QAQ": ("answer", "question"),
}

_WORD_RE = re.compile(r"[0-9a-z]+")


def _words(text: str) -> list[str]:
    return _WORD_RE.findall(text.lower())


class HashEncoder:
    """Hashing sentence encoder: word and word-trigram features signed
    into `dim` buckets, salted by (mode, role). No weights, bit-stable
    across platforms."""

    def __init__(self, dim: int = 768):
        if dim < 8:
            raise ValueError(f"dim must be >= 8, got {dim}")
        self.dim = dim

    def _features(self, text: str):
        for word in _words(text):
            yield word
            padded = f"<{word}>"
            for i in range(len(padded) - 2):
                yield padded[i : i + 3]

    def _accumulate(self, vec: np.ndarray, salt: str, text: str):
        for feature in self._features(text):
            digest = hashlib.sha1(f"{salt}|{feature}".encode("utf-8")).digest()
            h = int.from_bytes(digest[:8], "big")
            vec[h % self.dim] += 1.0 if h & 1 else -1.0

    def encode_queries(self, texts: list[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float64)
        for row, text in enumerate(texts):
            self._accumulate(out[row], "query|query", text)
        return _normalize_rows(out)

    def encode_pairs(self, pairs: list[tuple[str, str]]) -> np.ndarray:
        out = np.zeros((len(pairs), self.dim), dtype=np.float64)
        for row, (question, answer) in enumerate(pairs):
            self._accumulate(out[row], "pair|question", question)
            self._accumulate(out[row], "pair|answer", answer)
        return _normalize_rows(out)


def _normalize_rows(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return (matrix / norms).astype(np.float32)


class OverlapScorer:
    """Token-overlap triplet scorer: Jaccard between the target's tokens
    and the union of the layout's non-target segments."""

    def score(self, layout: str, items: list[dict]) -> list[float]:
        scores = []
        for item in items:
            target = set(_words(item["target"]))
            rest: set[str] = set()
            for role in LAYOUT_TAIL[layout]:
                rest |= set(_words(item.get(role) or ""))
            union = target | rest
            scores.append(len(target & rest) / len(union) if union else 0.0)
        return scores


class TransformersEncoder:
    """Mean-pooled transformer embeddings, L2-normalized.

    Queries run through the shared encoder; pairs are tokenized as a
    two-segment sequence so the model's own separator token splits
    question and answer. An optional separate checkpoint can serve the
    pair branch.
    """

    def __init__(self, model_id: str, max_seq_len: int, pair_model_id: str | None = None):
        import torch
        from transformers import AutoModel, AutoTokenizer

        self._torch = torch
        torch.manual_seed(0)
        self.tokenizer = AutoTokenizer.from_pretrained(model_id)
        self.model = AutoModel.from_pretrained(model_id).eval()
        if pair_model_id:
            self.pair_tokenizer = AutoTokenizer.from_pretrained(pair_model_id)
            self.pair_model = AutoModel.from_pretrained(pair_model_id).eval()
        else:
            self.pair_tokenizer = self.tokenizer
            self.pair_model = self.model
        self.max_seq_len = max_seq_len
        self.dim = int(self.model.config.hidden_size)

    def _run(self, model, encoded) -> np.ndarray:
        with self._torch.no_grad():
            output = model(**encoded)
        hidden = output.last_hidden_state
        mask = encoded["attention_mask"].unsqueeze(-1).to(hidden.dtype)
        pooled = (hidden * mask).sum(dim=1) / mask.sum(dim=1).clamp(min=1)
        return _normalize_rows(pooled.cpu().numpy().astype(np.float64))

    def encode_queries(self, texts: list[str]) -> np.ndarray:
        encoded = self.tokenizer(
            texts, padding=True, truncation=True, max_length=self.max_seq_len, return_tensors="pt"
        )
        return self._run(self.model, encoded)

    def encode_pairs(self, pairs: list[tuple[str, str]]) -> np.ndarray:
        questions = [q for q, _ in pairs]
        answers = [a for _, a in pairs]
        encoded = self.pair_tokenizer(
            questions,
            answers,
            padding=True,
            truncation="longest_first",
            max_length=self.max_seq_len,
            return_tensors="pt",
        )
        return self._run(self.pair_model, encoded)


class TransformersScorer:
    """Sequence-classification head over the layout-ordered segments,
    joined with the model's separator token. Longest-segment-first
    truncation keeps as much of every segment as possible."""

    def __init__(self, model_id: str, max_seq_len: int):
        import torch
        from transformers import AutoModelForSequenceClassification, AutoTokenizer

        self._torch = torch
        torch.manual_seed(0)
        self.tokenizer = AutoTokenizer.from_pretrained(model_id)
        self.model = AutoModelForSequenceClassification.from_pretrained(model_id).eval()
        self.max_seq_len = max_seq_len

    def _truncate(self, segments: list[list[int]], budget: int) -> list[list[int]]:
        segments = [list(s) for s in segments]
        while sum(len(s) for s in segments) > budget:
            longest = max(range(len(segments)), key=lambda i: len(segments[i]))
            if not segments[longest]:
                break
            segments[longest].pop()
        return segments

    def score(self, layout: str, items: list[dict]) -> list[float]:
        sep = self.tokenizer.sep_token_id
        cls = self.tokenizer.cls_token_id
        rows = []
        for item in items:
            texts = [item["target"]] + [item.get(role) or "" for role in LAYOUT_TAIL[layout]]
            token_segments = [
                self.tokenizer.encode(text, add_special_tokens=False) for text in texts
            ]
            specials = 2 + (len(token_segments) - 1)  # [CLS], separators, trailing [SEP]
            token_segments = self._truncate(token_segments, self.max_seq_len - specials)
            ids = [cls]
            for i, segment in enumerate(token_segments):
                if i:
                    ids.append(sep)
                ids.extend(segment)
            ids.append(sep)
            rows.append(ids)
        width = max(len(r) for r in rows)
        pad = self.tokenizer.pad_token_id or 0
        input_ids = self._torch.tensor([r + [pad] * (width - len(r)) for r in rows])
        attention = self._torch.tensor(
            [[1] * len(r) + [0] * (width - len(r)) for r in rows]
        )
        with self._torch.no_grad():
            logits = self.model(input_ids=input_ids, attention_mask=attention).logits
        if logits.shape[-1] == 1:
            return [float(v) for v in logits[:, 0]]
        return [float(v) for v in logits[:, -1]]


def make_encoder(config: ServerConfig):
    spec = config.encoder
    if spec == "hash" or spec.startswith("hash:"):
        dim = int(spec.split(":", 1)[1]) if ":" in spec else 768
        return HashEncoder(dim=dim)
    if spec.startswith("hf:"):
        pair = None
        if config.pair_encoder:
            if not config.pair_encoder.startswith("hf:"):
                raise ValueError("pair_encoder must be an hf:<model> spec")
            pair = config.pair_encoder[3:]
        return TransformersEncoder(spec[3:], config.max_seq_len, pair)
    raise ValueError(f"unknown encoder spec {spec!r}")


def make_scorer(config: ServerConfig):
    spec = config.scorer
    if spec == "overlap":
        return OverlapScorer()
    if spec.startswith("hf:"):
        return TransformersScorer(spec[3:], config.max_seq_len)
    raise ValueError(f"unknown scorer spec {spec!r}")
