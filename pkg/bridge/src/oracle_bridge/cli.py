"""Command-line launcher for the bridge."""
from __future__ import annotations

import argparse
import sys

from .app import DEFAULT_MAX_IMAGE_BYTES, BridgeConfig, serve
from .backends import BackendError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="oracle-bridge", description=__doc__)
    parser.add_argument("--describer", default="stub", help="describer backend name")
    parser.add_argument("--embedder", default="stub", help="embedder backend name")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8571)
    parser.add_argument(
        "--max-image-bytes", type=int, default=DEFAULT_MAX_IMAGE_BYTES,
        help="reject request images larger than this",
    )
    parser.add_argument("--timeout", type=float, default=60.0, help="request timeout seconds")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = BridgeConfig(
            describer_model=args.describer,
            embedder_model=args.embedder,
            host=args.host,
            port=args.port,
            max_image_bytes=args.max_image_bytes,
            request_timeout_s=args.timeout,
        )
        serve(cfg)
    except (BackendError, ValueError) as exc:
        print(f"startup failed: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
