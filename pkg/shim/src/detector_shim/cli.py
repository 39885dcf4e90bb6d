"""detector-shim: serve a detection model behind the /detect HTTP contract."""

from __future__ import annotations

import argparse
import logging
import sys

from .models import load_model
from .server import serve


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="detector-shim",
        description="HTTP shim exposing a detection model as POST /detect",
    )
    parser.add_argument("--port", type=int, default=8090)
    parser.add_argument("--host", default="0.0.0.0")
    parser.add_argument(
        "--model",
        default="synthetic",
        help="echo:FILE.json | synthetic[:WxH] | torchvision:NAME",
    )
    parser.add_argument(
        "--confidence",
        type=float,
        default=0.5,
        help="drop boxes scored below this cutoff (applied server-side)",
    )
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, stream=sys.stderr, format="%(message)s")
    try:
        wrapper = load_model(args.model, confidence=args.confidence)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        serve(wrapper, args.port, args.host)
    except KeyboardInterrupt:
        pass
    return 0


if __name__ == "__main__":
    sys.exit(main())
