"""Database-backed open-domain question answering.

Stored question/answer pairs are embedded offline; an exact cosine
scan retrieves the closest pairs for a query, a triplet scorer reranks
them, and the top pair's answer is returned. Ships with the dataset
construction and annotation tooling plus an evaluation and latency
harness.
"""

from .encoder import ReferenceEncoder, RemoteEncoder, SegmentedInput, make_encoder
from .errors import ConfigError, DatasetError, NotFoundError, QAError, TransportError
from .index import RetrievalResult, VectorIndex, cosine
from .metrics import MetricsReport, RankingExample, evaluate, load_dataset
from .pipeline import AnswerResponse, Pipeline, PipelineConfig
from .rerank import (
    RankedCandidate,
    ReferenceScorer,
    RemoteScorer,
    Triplet,
    build_input,
    make_scorer,
    rerank,
    select_answer,
)
from .store import IngestReport, QAPair, QAStore, SourceConfig

__version__ = "0.1.0"

__all__ = [
    "AnswerResponse",
    "ConfigError",
    "DatasetError",
    "IngestReport",
    "MetricsReport",
    "NotFoundError",
    "Pipeline",
    "PipelineConfig",
    "QAError",
    "QAPair",
    "QAStore",
    "RankedCandidate",
    "RankingExample",
    "ReferenceEncoder",
    "ReferenceScorer",
    "RemoteEncoder",
    "RemoteScorer",
    "RetrievalResult",
    "SegmentedInput",
    "SourceConfig",
    "TransportError",
    "Triplet",
    "VectorIndex",
    "build_input",
    "cosine",
    "evaluate",
    "load_dataset",
    "make_encoder",
    "make_scorer",
    "rerank",
    "select_answer",
]
