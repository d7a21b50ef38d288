import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

pytest.importorskip("speechprep_workers", reason="workers package not installed")

from workerharness import WorkerClient, write_tone_wav  # noqa: E402


@pytest.fixture
def client():
    """Factory for fake-engine workers, closed at teardown."""
    opened: list[WorkerClient] = []

    def spawn(stage: str, *extra: str) -> WorkerClient:
        worker = WorkerClient("--stage", stage, "--engine", "fake", *extra)
        opened.append(worker)
        return worker

    yield spawn
    for worker in opened:
        worker.close()


@pytest.fixture(scope="session")
def burst_wav(tmp_path_factory) -> Path:
    """8 s with tone from 1.0 s to 7.0 s."""
    root = tmp_path_factory.mktemp("audio")
    return write_tone_wav(root / "bursts.wav", [(1.0, 6.0)], 8.0)


@pytest.fixture(scope="session")
def silence_wav(tmp_path_factory) -> Path:
    root = tmp_path_factory.mktemp("audio")
    return write_tone_wav(root / "silence.wav", [], 5.0)
