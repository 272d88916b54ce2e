"""Embedding contract for the bi-encoder search engine.

Two input templates exist: a lone query, and a stored question/answer
pair. Encoders receive role-tagged segments rather than literal special
tokens, so each backend applies its own tokenizer's markers.

Every encoder returns unit-norm float32 vectors; the index can then use
plain dot products as cosine similarity.

The remote wire protocol (shared with any model server):
    POST {base_url}/encode
    request  {"mode": "query"|"pair", "items": [{"query": t}, ...]   (mode=query)
                                  or [{"question": q, "answer": a}, ...] (mode=pair)}
    response {"dim": d, "vectors": [[f32, ...], ...]}  in request order
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
import requests

from .errors import TransportError

MODE_QUERY = "query"
MODE_PAIR = "pair"

ROLE_QUERY = "query"
ROLE_QUESTION = "question"
ROLE_ANSWER = "answer"

DEFAULT_DIM = 768


@dataclass(frozen=True)
class SegmentedInput:
    """Role-tagged text segments making up one encoder input.

    mode "query" holds exactly one query segment; mode "pair" holds a
    question segment followed by an answer segment.
    """

    mode: str
    segments: tuple[tuple[str, str], ...]

    def __post_init__(self):
        roles = tuple(role for role, _ in self.segments)
        if self.mode == MODE_QUERY:
            if roles != (ROLE_QUERY,):
                raise ValueError(f"query input needs exactly one query segment, got roles {roles}")
            if not self.segments[0][1].strip():
                raise ValueError("query text is empty")
        elif self.mode == MODE_PAIR:
            if roles != (ROLE_QUESTION, ROLE_ANSWER):
                raise ValueError(f"pair input needs (question, answer) segments, got roles {roles}")
            if not self.segments[0][1].strip():
                raise ValueError("pair question text is empty")
        else:
            raise ValueError(f"unknown input mode {self.mode!r}")

    @classmethod
    def query(cls, t: str) -> "SegmentedInput":
        return cls(MODE_QUERY, ((ROLE_QUERY, t),))

    @classmethod
    def pair(cls, q: str, a: str) -> "SegmentedInput":
        return cls(MODE_PAIR, ((ROLE_QUESTION, q), (ROLE_ANSWER, a)))


def l2_normalize(vector: np.ndarray) -> np.ndarray:
    """Return `vector` scaled to unit Euclidean norm, as float32."""
    v = np.asarray(vector, dtype=np.float64)
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        raise ValueError("cannot normalize a zero vector")
    return (v / norm).astype(np.float32)


class Encoder:
    """Base interface: encode one input or a batch, report the dimension."""

    dim: int

    def encode(self, item: SegmentedInput) -> np.ndarray:
        raise NotImplementedError

    def encode_query(self, t: str) -> np.ndarray:
        return self.encode(SegmentedInput.query(t))

    def encode_pair(self, q: str, a: str) -> np.ndarray:
        return self.encode(SegmentedInput.pair(q, a))

    def encode_batch(self, items: list[SegmentedInput]) -> list[np.ndarray]:
        return [self.encode(item) for item in items]


def _trigrams(text: str) -> list[str]:
    # Boundary sentinels so one- and two-character texts still produce
    # at least one feature.
    padded = "\x02" + text + "\x03"
    return [padded[i : i + 3] for i in range(len(padded) - 2)]


class ReferenceEncoder(Encoder):
    """Deterministic, dependency-free stand-in for a neural bi-encoder.

    Each segment's character-trigram multiset is hashed into `dim`
    signed buckets. The hash is salted with (mode, role), so query-mode
    and pair-mode encodings of the same text live in different
    subspaces, and swapping question/answer changes the vector. Fully
    stable across processes and platforms for a fixed (text, mode, dim,
    seed).
    """

    def __init__(self, dim: int = DEFAULT_DIM, seed: int = 0):
        if dim < 8:
            raise ValueError(f"dim must be >= 8, got {dim}")
        self.dim = dim
        self.seed = seed
        self._key = int(seed).to_bytes(8, "little", signed=False)
        self._bucket_cache: dict[tuple[str, str, str], tuple[int, int]] = {}

    def _bucket(self, mode: str, role: str, gram: str) -> tuple[int, int]:
        cache_key = (mode, role, gram)
        hit = self._bucket_cache.get(cache_key)
        if hit is not None:
            return hit
        digest = hashlib.blake2b(
            f"{mode}\x1f{role}\x1f{gram}".encode("utf-8"), key=self._key, digest_size=8
        ).digest()
        h = int.from_bytes(digest, "little")
        bucket = h % self.dim
        sign = 1 if h & (1 << 63) else -1
        if len(self._bucket_cache) >= 1 << 20:
            self._bucket_cache.clear()
        self._bucket_cache[cache_key] = (bucket, sign)
        return bucket, sign

    def encode(self, item: SegmentedInput) -> np.ndarray:
        counts = np.zeros(self.dim, dtype=np.float64)
        for role, text in item.segments:
            for gram in _trigrams(text):
                bucket, sign = self._bucket(item.mode, role, gram)
                counts[bucket] += sign
        if not counts.any():
            # Degenerate all-empty input: fall back to a salt-only feature
            # so the vector is well defined.
            bucket, sign = self._bucket(item.mode, "\x00bias", "")
            counts[bucket] = sign
        return l2_normalize(counts)


class RemoteEncoder(Encoder):
    """Client for a model server speaking the /encode wire protocol."""

    def __init__(
        self,
        base_url: str,
        dim: int | None = None,
        timeout: float = 30.0,
        retries: int = 2,
        batch_size: int = 256,
    ):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.retries = retries
        self.batch_size = max(1, batch_size)
        self._session = requests.Session()
        self._dim = dim

    @property
    def dim(self) -> int:
        if self._dim is None:
            # Probe with the health endpoint so dim is known before any encode.
            payload = self._request("GET", "/health", None)
            self._dim = int(payload["dim"])
        return self._dim

    def _request(self, method: str, path: str, body: dict | None) -> dict:
        url = self.base_url + path
        last_error: Exception | None = None
        for _ in range(self.retries + 1):
            try:
                if method == "GET":
                    resp = self._session.get(url, timeout=self.timeout)
                else:
                    resp = self._session.post(url, json=body, timeout=self.timeout)
                resp.raise_for_status()
                return resp.json()
            except (requests.RequestException, ValueError) as exc:
                last_error = exc
        raise TransportError(f"encoder backend {url} failed: {last_error}", stage="encode")

    def _encode_chunk(self, mode: str, items: list[SegmentedInput]) -> list[np.ndarray]:
        if mode == MODE_QUERY:
            wire_items = [{"query": si.segments[0][1]} for si in items]
        else:
            wire_items = [{"question": si.segments[0][1], "answer": si.segments[1][1]} for si in items]
        payload = self._request("POST", "/encode", {"mode": mode, "items": wire_items})
        vectors = payload.get("vectors")
        if vectors is None or len(vectors) != len(items):
            raise TransportError(
                f"encoder backend returned {0 if vectors is None else len(vectors)} "
                f"vectors for {len(items)} items",
                stage="encode",
            )
        dim = int(payload["dim"])
        if self._dim is None:
            self._dim = dim
        elif dim != self._dim:
            raise TransportError(f"encoder dim changed: {self._dim} -> {dim}", stage="encode")
        # Renormalize defensively: the server already normalizes, but f32
        # serialization can nudge the norm.
        return [l2_normalize(np.asarray(v, dtype=np.float32)) for v in vectors]

    def encode(self, item: SegmentedInput) -> np.ndarray:
        return self.encode_batch([item])[0]

    def encode_batch(self, items: list[SegmentedInput]) -> list[np.ndarray]:
        if not items:
            return []
        out: list[np.ndarray | None] = [None] * len(items)
        # One request series per mode; order restored by original position.
        for mode in (MODE_QUERY, MODE_PAIR):
            positions = [i for i, si in enumerate(items) if si.mode == mode]
            for start in range(0, len(positions), self.batch_size):
                chunk = positions[start : start + self.batch_size]
                vectors = self._encode_chunk(mode, [items[i] for i in chunk])
                for pos, vec in zip(chunk, vectors):
                    out[pos] = vec
        return out  # type: ignore[return-value]


def make_encoder(spec: str, dim: int = DEFAULT_DIM, seed: int = 0) -> Encoder:
    """Build an encoder from a backend spec: "ref" or "remote:<url>"."""
    if spec == "ref":
        return ReferenceEncoder(dim=dim, seed=seed)
    if spec.startswith("remote:"):
        return RemoteEncoder(spec[len("remote:") :], dim=dim)
    raise ValueError(f"unknown encoder backend {spec!r} (expected 'ref' or 'remote:<url>')")
