"""Operator entry point: run the pipeline, inspect reports, check manifests.

    speechprep run --config run.json --parallelism 8
    speechprep run --input corpus/ --output out/ --stub-all
    speechprep stats out/report.json
    speechprep validate out/manifest.jsonl

Every config key is also a flag of the same dotted name (for example
``--filter.min_quality 2.4``), so file values can be overridden ad hoc.
Exit codes: 0 success, 1 runtime failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import config as config_mod
from .config import RunConfig, build_config, dump_config, load_config_file
from .errors import ConfigInvalid, NoInputs, ParseError, SpeechPrepError
from .manifest import collect_violations
from .pipeline import run_pipeline
from .report import PipelineReport, render_report

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2

# Keys with dedicated flags below; everything else gets a generated flag.
_SPECIAL_KEYS = {"input_roots", "output_root", "parallelism", "resume"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="speechprep", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="process a corpus end to end")
    run.add_argument("--config", type=Path, default=None, help="JSON config file")
    run.add_argument(
        "--input",
        action="append",
        default=None,
        metavar="DIR",
        help="input root (repeatable; replaces the config file's input_roots)",
    )
    run.add_argument("--output", default=None, metavar="DIR", help="output root")
    run.add_argument("--parallelism", default=None, help="concurrent source items")
    run.add_argument("--resume", action="store_true", help="reuse finished items' state")
    run.add_argument(
        "--stub-all",
        action="store_true",
        help="force every stage backend to the built-in deterministic stub",
    )
    run.add_argument(
        "--dump-config",
        action="store_true",
        help="print the effective config as JSON and exit without running",
    )
    for key in sorted(config_mod.SCHEMA):
        if key in _SPECIAL_KEYS:
            continue
        run.add_argument(f"--{key}", default=None, metavar="VALUE", dest=key)
    run.set_defaults(func=cmd_run)

    stats = sub.add_parser("stats", help="render a run report as a stage table")
    stats.add_argument("report", type=Path, help="path to report.json")
    stats.set_defaults(func=cmd_stats)

    validate = sub.add_parser("validate", help="re-check manifest invariants")
    validate.add_argument("manifest", type=Path, help="path to manifest.jsonl")
    validate.add_argument(
        "--audio-root",
        type=Path,
        default=None,
        help="directory the manifest's wav paths are relative to (default: the manifest's)",
    )
    validate.set_defaults(func=cmd_validate)
    return parser


def _gather_overrides(args: argparse.Namespace) -> dict:
    overrides: dict = {}
    for key, (_, parse, _) in config_mod.SCHEMA.items():
        if key in _SPECIAL_KEYS:
            continue
        raw = getattr(args, key, None)
        if raw is None:
            continue
        try:
            overrides[key] = parse(raw)
        except ValueError as exc:
            raise ConfigInvalid(f"bad value for --{key}: {exc}") from exc
    if args.input:
        overrides["input_roots"] = list(args.input)
    if args.output is not None:
        overrides["output_root"] = args.output
    if args.parallelism is not None:
        try:
            overrides["parallelism"] = int(args.parallelism)
        except ValueError as exc:
            raise ConfigInvalid(f"bad value for --parallelism: {exc}") from exc
    if args.resume:
        overrides["resume"] = True
    if args.stub_all:
        for stage in config_mod.STAGES:
            overrides[f"backend.{stage}"] = "stub"
    return overrides


def _build_run_config(args: argparse.Namespace) -> RunConfig:
    file_values = load_config_file(args.config) if args.config else None
    cfg = build_config(file_values, _gather_overrides(args))
    for root in cfg.input_roots:
        if not Path(root).is_dir():
            raise ConfigInvalid(f"input root {root!r} does not exist")
    return cfg


def cmd_run(args: argparse.Namespace) -> int:
    try:
        cfg = _build_run_config(args)
        if args.dump_config:
            sys.stdout.write(dump_config(cfg))
            return EXIT_OK
        report, records = run_pipeline(cfg)
    except (ConfigInvalid, NoInputs) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SpeechPrepError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    sys.stdout.write(render_report(report))
    out_root = Path(cfg.output_root)
    print(f"\nmanifest: {out_root / 'manifest.jsonl'} ({len(records)} segments)")
    print(f"report:   {out_root / 'report.json'}")
    return EXIT_OK


def cmd_stats(args: argparse.Namespace) -> int:
    try:
        report = PipelineReport.load(args.report)
    except (ParseError, SpeechPrepError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    sys.stdout.write(render_report(report))
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    if not args.manifest.exists():
        print(f"error: manifest {args.manifest} does not exist", file=sys.stderr)
        return EXIT_RUNTIME
    base_dir = args.audio_root if args.audio_root is not None else args.manifest.parent
    violations = collect_violations(args.manifest, base_dir)
    for line_no, message in violations:
        print(f"line {line_no}: {message}")
    print(f"{len(violations)} violation(s)")
    return EXIT_OK if not violations else EXIT_RUNTIME


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
