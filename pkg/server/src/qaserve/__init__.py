"""Inference service exposing encoders and triplet scorers behind the
qa engine's /encode and /score wire protocols."""

from .app import create_app
from .backends import HashEncoder, OverlapScorer, make_encoder, make_scorer
from .config import ServerConfig

__version__ = "0.1.0"

__all__ = [
    "HashEncoder",
    "OverlapScorer",
    "ServerConfig",
    "create_app",
    "make_encoder",
    "make_scorer",
]
