"""Entry point: load one encoder, serve until stopped."""

from __future__ import annotations

import argparse

import uvicorn

from embed_bridge.app import create_app
from embed_bridge.encoders import load_encoder


def serve(model_id: str, host: str = "127.0.0.1", port: int = 8601) -> None:
    encoder = load_encoder(model_id)
    print(f"serving {encoder.model_id} (dim={encoder.dim}) on {host}:{port}")
    uvicorn.run(create_app(encoder), host=host, port=port, log_level="warning")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument(
        "--model",
        default="all-mpnet-base-v2",
        help="sentence-transformers model name/path, or hash:<dim> for the weight-free encoder",
    )
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8601)
    args = parser.parse_args()
    serve(args.model, args.host, args.port)


if __name__ == "__main__":
    main()
