"""Command-line runner for the adapter service."""

from __future__ import annotations

import argparse

from .app import serve
from .config import AdapterConfig


def main(argv: list[str] | None = None) -> None:
    parser = argparse.ArgumentParser(prog="r2a-adapter")
    parser.add_argument("--backend", choices=["mock", "real"], default="mock")
    parser.add_argument("--vision-model", default="openai/clip-vit-large-patch14")
    parser.add_argument("--language-model", default="microsoft/deberta-v2-xlarge")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8091)
    parser.add_argument("--max-batch", type=int, default=256)
    parser.add_argument("--mock-dim", type=int, default=64)
    args = parser.parse_args(argv)
    serve(
        AdapterConfig(
            backend=args.backend,
            vision_model=args.vision_model,
            language_model=args.language_model,
            device=args.device,
            host=args.host,
            port=args.port,
            max_batch=args.max_batch,
            mock_dim=args.mock_dim,
        )
    )


if __name__ == "__main__":
    main()
