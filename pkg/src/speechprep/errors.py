"""Exception taxonomy for the preprocessing engine.

Every error the engine raises deliberately derives from SpeechPrepError so
the orchestrator can distinguish per-item processing failures from bugs.
"""


class SpeechPrepError(Exception):
    """Base class for all engine-raised errors."""


# -- decoding / audio ------------------------------------------------------

class UnsupportedFormat(SpeechPrepError):
    """Input bytes are not a container/encoding the decoder supports."""


class CorruptContainer(SpeechPrepError):
    """Input looked like a supported container but its structure is broken."""


class EmptyAudio(SpeechPrepError):
    """Decoded audio holds zero samples."""


class InvalidRate(SpeechPrepError):
    """Requested sample rate is not a positive integer."""


class SilentAudio(SpeechPrepError):
    """Buffer RMS is zero, so dBFS (and gain toward a target) is undefined."""


# -- filtering -------------------------------------------------------------

class EmptyTranscript(SpeechPrepError):
    """Transcript holds no non-whitespace characters."""


class EmptyInput(SpeechPrepError):
    """Statistic requested over an empty collection."""


# -- backend protocol ------------------------------------------------------

class BackendError(SpeechPrepError):
    """Base class for worker/transport failures."""


class ConnectFailed(BackendError):
    """Worker transport could not be established."""


class ProtocolVersionMismatch(BackendError):
    """Worker speaks a different protocol version than the engine."""


class ProtocolViolation(BackendError):
    """Worker sent a record the engine cannot accept (malformed or invalid)."""


class WorkerCrash(BackendError):
    """Worker process or connection died while a request was in flight."""


class Timeout(BackendError):
    """Worker did not answer within the configured per-request timeout."""


class PartialBatch(BackendError):
    """A batched request succeeded for some items and failed for others.

    ``results`` holds one entry per input: the per-item payload for
    successes, None for failures; ``failures`` lists (segment_id, detail)
    pairs in wire order.
    """

    def __init__(self, message, results, failures):
        super().__init__(message)
        self.results = results
        self.failures = failures


# -- persistence -----------------------------------------------------------

class IoFailure(SpeechPrepError):
    """Filesystem write/read failed."""


class QuantizationOverflow(SpeechPrepError):
    """Sample magnitude above 1.0 reached the 16-bit writer."""


class ParseError(SpeechPrepError):
    """A manifest/report line is not valid. Carries the 1-based line number."""

    def __init__(self, message, line_no=None):
        super().__init__(message)
        self.line_no = line_no


class InvariantViolation(SpeechPrepError):
    """A parsed record violates its declared invariants."""

    def __init__(self, message, line_no=None):
        super().__init__(message)
        self.line_no = line_no


# -- orchestration ---------------------------------------------------------

class ConfigInvalid(SpeechPrepError):
    """Run configuration failed validation. Message names the field."""


class NoInputs(SpeechPrepError):
    """Input roots contain no processable source files."""


class ZeroAudio(SpeechPrepError):
    """RTF requested over zero hours of source audio."""
