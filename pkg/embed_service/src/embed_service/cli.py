"""Command line for the embedding sidecar: serve the API or export offline."""

from __future__ import annotations

import argparse
import sys

from .app import DEFAULT_BATCH_LIMIT, create_app
from .encoder import DEFAULT_MODEL_ID, load_encoder
from .export import export


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="embed-service")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the HTTP embedding service")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--model", default=DEFAULT_MODEL_ID)
    p.add_argument("--batch-limit", type=int, default=DEFAULT_BATCH_LIMIT)

    p = sub.add_parser("export", help="embed a text file offline")
    p.add_argument("--in", dest="input", required=True, help="corpus JSONL or plain text")
    p.add_argument("--out", required=True)
    p.add_argument("--model", default=DEFAULT_MODEL_ID)
    p.add_argument("--format", choices=("binary", "jsonl"), default="binary")
    p.add_argument("--normalize", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "serve":
            import uvicorn

            app = create_app(load_encoder(args.model), batch_limit=args.batch_limit)
            uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
            return 0
        count = export(
            args.input,
            args.out,
            load_encoder(args.model),
            format=args.format,
            normalize=args.normalize,
        )
        print(f"wrote {count} embeddings to {args.out}", file=sys.stderr)
        return 0
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
