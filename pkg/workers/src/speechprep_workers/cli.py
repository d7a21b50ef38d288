"""Run one stage worker over standard streams or a TCP socket.

    speechprep-worker --stage transcription --device cuda --batch 16
    speechprep-worker --stage vad --engine fake
    speechprep-worker --stage scoring --listen 127.0.0.1:0

Wire the worker into the pipeline via its backend descriptors, e.g.
``--backend.vad "subprocess:speechprep-worker --stage vad"`` or
``--backend.scoring tcp:127.0.0.1:9000``.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ENGINES, STAGES, WorkerRuntimeConfig, default_cache_dir
from .server import WorkerServer, serve_stdio, serve_tcp


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="speechprep-worker", description=__doc__)
    parser.add_argument("--stage", required=True, choices=STAGES)
    parser.add_argument(
        "--engine",
        choices=ENGINES,
        default="real",
        help="'real' loads the stage's pretrained model; 'fake' is the "
        "deterministic dependency-free double (conformance tests, dry runs)",
    )
    parser.add_argument("--model", default=None, help="model name or local path")
    parser.add_argument("--device", default="auto", help="auto, cpu, cuda, or cuda:N")
    parser.add_argument(
        "--batch", type=int, default=8, help="max items per batched request"
    )
    parser.add_argument(
        "--language", default=None, help="language hint passed to the ASR model"
    )
    parser.add_argument(
        "--cache-dir",
        type=Path,
        default=None,
        help="model weight cache (default: $SPEECHPREP_WORKERS_CACHE or "
        "~/.cache/speechprep-workers)",
    )
    parser.add_argument(
        "--listen",
        default=None,
        metavar="HOST:PORT",
        help="serve on a TCP socket instead of standard streams (port 0 picks one)",
    )
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = WorkerRuntimeConfig(
            stage=args.stage,
            engine=args.engine,
            model=args.model,
            device=args.device,
            batch_size=args.batch,
            language=args.language,
            cache_dir=args.cache_dir if args.cache_dir else default_cache_dir(),
        )
    except ValueError as exc:
        parser.error(str(exc))
    server = WorkerServer(cfg)
    try:
        if args.listen:
            host, _, port_text = args.listen.rpartition(":")
            serve_tcp(server, host, int(port_text))
        else:
            serve_stdio(server)
    except (KeyboardInterrupt, BrokenPipeError):
        pass
    return 0


if __name__ == "__main__":
    sys.exit(main())
