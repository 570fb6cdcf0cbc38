"""scorerd command line: serve a model or conformance-check an endpoint."""
from __future__ import annotations

import argparse
import sys

from .conformance import conformance_check
from .models import ScorerModelConfig, load_config
from .service import serve_scorer


def cmd_serve(args) -> int:
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = ScorerModelConfig(
            model_id=args.model_id,
            max_input_tokens=args.max_input_tokens,
            batch_size=args.batch_size,
        )
    running = serve_scorer(cfg, host=args.host, port=args.port)
    print(f"scorerd [{cfg.model_id}] on {running.address} (ctrl-c to stop)")
    try:
        running.thread.join()
    except KeyboardInterrupt:
        running.close()
    return 0


def cmd_check(args) -> int:
    report = conformance_check(args.endpoint, timeout=args.timeout,
                               max_input_tokens=args.max_input_tokens)
    print(report.format_lines())
    return 0 if report.passed else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="scorerd", description="scorer sidecar")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="serve a scoring model over HTTP")
    p.add_argument("--config", default=None, help="JSON config file; overrides the flags below")
    p.add_argument("--model-id", default="neg-length")
    p.add_argument("--max-input-tokens", type=int, default=512)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8601)
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("check", help="run protocol conformance checks against an endpoint")
    p.add_argument("--endpoint", required=True)
    p.add_argument("--timeout", type=float, default=10.0)
    p.add_argument("--max-input-tokens", type=int, default=None,
                   help="enables the truncation check when the serving config is known")
    p.set_defaults(fn=cmd_check)

    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
