from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from corpusgen import build_corpus  # noqa: E402


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory) -> Path:
    """The deterministic three-file corpus; session-scoped, never mutated."""
    return build_corpus(tmp_path_factory.mktemp("corpus"))


@pytest.fixture
def run_dirs(tmp_path) -> tuple[Path, Path]:
    out = tmp_path / "out"
    return out, out / "exchange"
