"""`qa-model-server`: run the inference service."""

from __future__ import annotations

import argparse
import sys

from .app import create_app
from .config import ServerConfig


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qa-model-server",
        description="Encoder/scorer inference service for the qa engine.",
    )
    parser.add_argument("--encoder", default="hash:768", help="hash[:dim] or hf:<model-or-path>")
    parser.add_argument("--scorer", default="overlap", help="overlap or hf:<model-or-path>")
    parser.add_argument("--pair-encoder", help="optional separate hf:<model> for the pair branch")
    parser.add_argument("--max-seq-len", type=int, default=256)
    parser.add_argument("--batch-size", type=int, default=32)
    parser.add_argument("--max-items", type=int, default=1024)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8901)
    return parser


def main(argv: list[str] | None = None) -> int:
    import uvicorn

    args = build_parser().parse_args(argv)
    try:
        config = ServerConfig(
            encoder=args.encoder,
            scorer=args.scorer,
            pair_encoder=args.pair_encoder,
            max_seq_len=args.max_seq_len,
            batch_size=args.batch_size,
            max_items=args.max_items,
            host=args.host,
            port=args.port,
        )
        app = create_app(config)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    uvicorn.run(app, host=config.host, port=config.port, log_level="warning")
    return 0


if __name__ == "__main__":
    sys.exit(main())
