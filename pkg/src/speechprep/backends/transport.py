"""Worker connections over subprocess pipes or local TCP sockets.

A connection owns one channel, speaks one request at a time, and performs
the hello handshake on (re)connect. Request ids restart at 1 per
connection. A timed-out or crashed channel is torn down so the next
request reconnects — for subprocess workers that respawns the executable,
which is how the engine keeps a run alive past a worker death.
"""

from __future__ import annotations

import os
import select
import shlex
import socket
import subprocess
import threading
import time
from typing import Any, Callable

from ..errors import (
    ConnectFailed,
    ProtocolViolation,
    ProtocolVersionMismatch,
    Timeout,
    WorkerCrash,
)
from . import protocol

DEFAULT_TIMEOUT_S = 600.0

_MAX_LINE_BYTES = 64 * 1024 * 1024


class Channel:
    """One byte stream carrying newline-delimited records."""

    def send_line(self, line: bytes) -> None:
        raise NotImplementedError

    def recv_line(self, deadline: float) -> bytes:
        raise NotImplementedError

    def close(self) -> None:
        raise NotImplementedError


def _split_line(buffer: bytearray) -> bytes | None:
    idx = buffer.find(b"\n")
    if idx < 0:
        if len(buffer) > _MAX_LINE_BYTES:
            raise ProtocolViolation(f"record exceeds {_MAX_LINE_BYTES} bytes")
        return None
    line = bytes(buffer[:idx])
    del buffer[: idx + 1]
    return line


class SubprocessChannel(Channel):
    """Worker as a child process; records cross its standard streams."""

    def __init__(self, argv: list[str]):
        self.argv = argv
        try:
            self.proc = subprocess.Popen(
                argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE, bufsize=0
            )
        except OSError as exc:
            raise ConnectFailed(f"cannot spawn worker {argv!r}: {exc}") from exc
        self._buffer = bytearray()

    def send_line(self, line: bytes) -> None:
        try:
            self.proc.stdin.write(line)
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise WorkerCrash(f"worker {self.argv[0]} closed its input: {exc}") from exc

    def recv_line(self, deadline: float) -> bytes:
        fd = self.proc.stdout.fileno()
        while True:
            line = _split_line(self._buffer)
            if line is not None:
                return line
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise Timeout(f"worker {self.argv[0]} did not respond in time")
            ready, _, _ = select.select([fd], [], [], remaining)
            if not ready:
                raise Timeout(f"worker {self.argv[0]} did not respond in time")
            data = os.read(fd, 65536)
            if data == b"":
                try:  # EOF usually precedes process exit by a moment
                    code = self.proc.wait(timeout=1.0)
                except subprocess.TimeoutExpired:
                    code = None
                raise WorkerCrash(
                    f"worker {self.argv[0]} exited (code {code}) mid-request"
                )
            self._buffer.extend(data)

    def close(self) -> None:
        if self.proc.poll() is None:
            try:
                self.proc.stdin.close()
            except OSError:
                pass
            try:
                self.proc.wait(timeout=5.0)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait()
        for stream in (self.proc.stdin, self.proc.stdout):
            try:
                stream.close()
            except OSError:
                pass


class TcpChannel(Channel):
    """Worker reachable on a local socket."""

    def __init__(self, host: str, port: int):
        try:
            self.sock = socket.create_connection((host, port), timeout=10.0)
        except OSError as exc:
            raise ConnectFailed(f"cannot connect to {host}:{port}: {exc}") from exc
        self.addr = f"{host}:{port}"
        self._buffer = bytearray()

    def send_line(self, line: bytes) -> None:
        try:
            self.sock.sendall(line)
        except OSError as exc:
            raise WorkerCrash(f"worker at {self.addr} dropped the connection: {exc}") from exc

    def recv_line(self, deadline: float) -> bytes:
        while True:
            line = _split_line(self._buffer)
            if line is not None:
                return line
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise Timeout(f"worker at {self.addr} did not respond in time")
            self.sock.settimeout(remaining)
            try:
                data = self.sock.recv(65536)
            except socket.timeout:
                raise Timeout(f"worker at {self.addr} did not respond in time") from None
            except OSError as exc:
                raise WorkerCrash(f"worker at {self.addr} dropped the connection: {exc}") from exc
            if data == b"":
                raise WorkerCrash(f"worker at {self.addr} closed the connection mid-request")
            self._buffer.extend(data)

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


class WorkerConnection:
    """Single-in-flight request/response client with reconnect-on-failure."""

    def __init__(
        self,
        channel_factory: Callable[[], Channel],
        name: str,
        timeout_s: float = DEFAULT_TIMEOUT_S,
    ):
        self._factory = channel_factory
        self.name = name
        self.timeout_s = timeout_s
        self._lock = threading.Lock()
        self._channel: Channel | None = None
        self._next_id = 1
        self.stage: str | None = None
        self.max_batch = 1
        self.languages: list[str] = []

    def _drop_channel(self) -> None:
        if self._channel is not None:
            self._channel.close()
            self._channel = None

    def _ensure_connected(self) -> None:
        if self._channel is not None:
            return
        self._channel = self._factory()
        self._next_id = 1
        try:
            record = self._roundtrip(
                {"op": "hello", "version": protocol.PROTOCOL_VERSION}
            )
        except protocol.WorkerReportedError as exc:
            self._drop_channel()
            detail = str(exc)
            if "version" in detail.lower():
                raise ProtocolVersionMismatch(detail) from exc
            raise ConnectFailed(f"worker {self.name} rejected hello: {detail}") from exc
        except BaseException:
            self._drop_channel()
            raise
        stage, version, max_batch, languages = protocol.parse_hello(record)
        if version != protocol.PROTOCOL_VERSION:
            self._drop_channel()
            raise ProtocolVersionMismatch(
                f"worker {self.name} speaks protocol version {version}, "
                f"engine speaks {protocol.PROTOCOL_VERSION}"
            )
        self.stage = stage
        self.max_batch = max_batch
        self.languages = languages

    def _roundtrip(self, payload: dict[str, Any]) -> dict[str, Any]:
        request_id = self._next_id
        self._next_id += 1
        record = dict(payload)
        record["id"] = request_id
        self._channel.send_line(protocol.encode_record(record))
        deadline = time.monotonic() + self.timeout_s
        line = self._channel.recv_line(deadline)
        response = protocol.decode_record(line)
        return protocol.check_response(response, request_id)

    def connect(self) -> "WorkerConnection":
        """Handshake now (idempotent), so capabilities are readable."""
        with self._lock:
            self._ensure_connected()
        return self

    def request(self, op: str, payload: dict[str, Any]) -> dict[str, Any]:
        """Send one op and return the validated ok-response record.

        Crashes and timeouts poison the channel, so a later request gets a
        fresh worker; the current one surfaces the error to its caller.
        """
        with self._lock:
            self._ensure_connected()
            try:
                return self._roundtrip({"op": op, **payload})
            except (WorkerCrash, Timeout, ProtocolViolation):
                self._drop_channel()
                raise
            except protocol.WorkerReportedError:
                raise

    def close(self) -> None:
        with self._lock:
            self._drop_channel()


def subprocess_connection(
    command: str | list[str], timeout_s: float = DEFAULT_TIMEOUT_S
) -> WorkerConnection:
    argv = shlex.split(command) if isinstance(command, str) else list(command)
    if not argv:
        raise ConnectFailed("empty worker command")
    return WorkerConnection(lambda: SubprocessChannel(argv), argv[0], timeout_s)


def tcp_connection(
    host: str, port: int, timeout_s: float = DEFAULT_TIMEOUT_S
) -> WorkerConnection:
    return WorkerConnection(lambda: TcpChannel(host, port), f"{host}:{port}", timeout_s)
