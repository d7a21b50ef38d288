#!/usr/bin/env python3
"""End-to-end demo of the worker protocol.

Builds the fixture corpus, runs the pipeline twice — once with the
in-process backends, once with all five stages served by subprocess
workers speaking the wire protocol — and checks that the two manifests
are byte-identical.
"""

import argparse
import shutil
import subprocess
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

from corpusgen import build_corpus

STAGES = ("separation", "diarization", "vad", "transcription", "scoring")


def worker_flags() -> list[str]:
    flags = []
    for stage in STAGES:
        descriptor = (
            f"subprocess:{sys.executable} -m speechprep.backends.stub_worker"
            f" --stage {stage}"
        )
        flags += [f"--backend.{stage}", descriptor]
    return flags


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument(
        "workdir",
        type=Path,
        nargs="?",
        default=Path("demo_run"),
        help="scratch directory for corpus and outputs (default: ./demo_run)",
    )
    args = parser.parse_args()

    corpus = build_corpus(args.workdir / "corpus")
    variants = {"inproc": [], "workers": worker_flags()}
    for name, extra in variants.items():
        out = args.workdir / name
        if out.exists():
            shutil.rmtree(out)
        print(f"--- {name} run -> {out}")
        subprocess.run(
            [sys.executable, "-m", "speechprep", "run",
             "--input", str(corpus), "--output", str(out), "--run_id", "demo",
             *extra],
            check=True,
        )

    manifests = [
        (args.workdir / name / "manifest.jsonl").read_bytes() for name in variants
    ]
    if manifests[0] == manifests[1]:
        print("manifests byte-identical: worker-backed run matches in-process run")
        return 0
    print("MISMATCH: worker-backed manifest differs from in-process manifest")
    return 1


if __name__ == "__main__":
    raise SystemExit(main())
