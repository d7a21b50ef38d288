"""Constants shared across the test suite (import by this unique name)."""

import sys
from pathlib import Path

GOLDEN_DIR = Path(__file__).parent / "golden"

# Stub workers for transport tests, launched with the running interpreter.
WORKER_CMD = f"{sys.executable} -m speechprep.backends.stub_worker"
