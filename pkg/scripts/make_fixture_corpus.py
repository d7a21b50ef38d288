#!/usr/bin/env python3
"""Write the deterministic fixture corpus used by the tests and demos.

The corpus is three tone-burst recordings with oracle sidecars (speaker
turns and transcripts) that drive the deterministic in-process backends,
plus optionally one undecodable file for exercising fault handling.
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

from corpusgen import build_corpus, build_corpus_with_corrupt_file


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("target", type=Path, help="directory to write the corpus into")
    parser.add_argument(
        "--with-corrupt-file",
        action="store_true",
        help="also write broken.wav (not a decodable WAV) for failure demos",
    )
    args = parser.parse_args()

    build = build_corpus_with_corrupt_file if args.with_corrupt_file else build_corpus
    build(args.target)
    names = sorted(p.name for p in args.target.iterdir())
    print(f"wrote {len(names)} files to {args.target}: {', '.join(names)}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
