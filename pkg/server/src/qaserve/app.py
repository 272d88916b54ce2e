"""FastAPI application speaking the engine's wire protocols.

    GET  /health -> {"status": "ok", "dim": d}
    POST /encode -> {"dim": d, "vectors": [[f32, ...], ...]}
    POST /score  -> {"scores": [f64, ...]}

Responses preserve request order. Batches above the configured item
limit are refused with 413; malformed modes and layouts with 400.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from .backends import LAYOUTS, make_encoder, make_scorer
from .config import ServerConfig


class EncodeItem(BaseModel):
    query: str | None = None
    question: str | None = None
    answer: str | None = None


class EncodeRequest(BaseModel):
    mode: str
    items: list[EncodeItem] = Field(default_factory=list)


class ScoreItem(BaseModel):
    target: str
    question: str | None = None
    answer: str | None = None


class ScoreRequest(BaseModel):
    layout: str
    items: list[ScoreItem] = Field(default_factory=list)


def create_app(config: ServerConfig | None = None) -> FastAPI:
    config = config or ServerConfig()
    encoder = make_encoder(config)
    scorer = make_scorer(config)
    app = FastAPI(title="qa-model-server")

    def check_size(n: int):
        if n > config.max_items:
            raise HTTPException(
                status_code=413, detail=f"batch of {n} exceeds the limit of {config.max_items}"
            )

    @app.get("/health")
    def health():
        return {"status": "ok", "dim": encoder.dim}

    @app.post("/encode")
    def encode(request: EncodeRequest):
        check_size(len(request.items))
        vectors = []
        if request.mode == "query":
            texts = []
            for i, item in enumerate(request.items):
                if item.query is None:
                    raise HTTPException(400, f"item {i}: mode=query needs a 'query' field")
                texts.append(item.query)
            for start in range(0, len(texts), config.batch_size):
                block = encoder.encode_queries(texts[start : start + config.batch_size])
                vectors.extend(row.tolist() for row in block)
        elif request.mode == "pair":
            pairs = []
            for i, item in enumerate(request.items):
                if item.question is None or item.answer is None:
                    raise HTTPException(
                        400, f"item {i}: mode=pair needs 'question' and 'answer' fields"
                    )
                pairs.append((item.question, item.answer))
            for start in range(0, len(pairs), config.batch_size):
                block = encoder.encode_pairs(pairs[start : start + config.batch_size])
                vectors.extend(row.tolist() for row in block)
        else:
            raise HTTPException(400, f"unknown mode {request.mode!r} (expected 'query' or 'pair')")
        return {"dim": encoder.dim, "vectors": vectors}

    @app.post("/score")
    def score(request: ScoreRequest):
        if request.layout not in LAYOUTS:
            raise HTTPException(400, f"unknown layout {request.layout!r} (expected one of {LAYOUTS})")
        check_size(len(request.items))
        items = [item.model_dump() for item in request.items]
        scores: list[float] = []
        for start in range(0, len(items), config.batch_size):
            scores.extend(scorer.score(request.layout, items[start : start + config.batch_size]))
        return {"scores": scores}

    return app
