"""Server configuration.

Backend specs:
    encoder: "hash[:dim]"          deterministic hashing encoder (no weights)
             "hf:<model-or-path>"  transformers model, mean-pooled + normalized
    scorer:  "overlap"             token-overlap scorer (no weights)
             "hf:<model-or-path>"  transformers sequence classifier

Model weights are always user-supplied identifiers or paths; nothing is
bundled.
"""

from __future__ import annotations

from dataclasses import dataclass

DEFAULT_MAX_SEQ_LEN = 256
DEFAULT_BATCH_SIZE = 32
DEFAULT_MAX_ITEMS = 1024


@dataclass
class ServerConfig:
    encoder: str = "hash:768"
    scorer: str = "overlap"
    max_seq_len: int = DEFAULT_MAX_SEQ_LEN
    batch_size: int = DEFAULT_BATCH_SIZE
    max_items: int = DEFAULT_MAX_ITEMS
    host: str = "127.0.0.1"
    port: int = 8901
    # Optional second encoder for the pair branch; None shares weights
    # across both branches.
    pair_encoder: str | None = None

    def __post_init__(self):
        if self.max_seq_len < 16:
            raise ValueError(f"max_seq_len must be >= 16, got {self.max_seq_len}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_items < 1:
            raise ValueError(f"max_items must be >= 1, got {self.max_items}")
