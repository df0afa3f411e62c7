"""Bridge entry point: `tsa-bridge serve --model NAME --device cpu`."""

from __future__ import annotations

import argparse
import logging
import sys

from .modeling import TINY_RANDOM
from .server import BridgeConfig, serve


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="tsa-bridge")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("serve", help="serve the tagger wire protocol")
    p.add_argument(
        "--model",
        default=TINY_RANDOM,
        help="pre-trained model name/path, or 'tiny-random' for a small "
        "randomly initialized model with a data-trained tokenizer",
    )
    p.add_argument("--device", default="cpu")
    p.add_argument("--listen", type=int, default=None, help="serve one TCP connection on this port")
    p.add_argument("--save-dir", default=None, dest="save_dir", help="persist trained models here")
    args = parser.parse_args(argv)

    logging.basicConfig(
        stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(name)s: %(message)s"
    )
    config = BridgeConfig(model_name=args.model, device=args.device, save_dir=args.save_dir)
    serve(config, listen_port=args.listen)
    return 0


if __name__ == "__main__":
    sys.exit(main())
