"""Client side of the subprocess forecast bridge.

One session owns one child process. Messages are single-line UTF-8 JSON
objects; the server speaks first with a hello line, then answers each
{"id", "window", "horizon"} request with {"id", "pred"} or an error envelope.
The client owns all timeouts. See docs/bridge-protocol.md for the wire format.
"""

from __future__ import annotations

import json
import math
import queue
import subprocess
import threading
import time
from dataclasses import dataclass
from typing import List, Optional, Sequence

from .errors import (
    BridgeBrokenPipe,
    BridgeError,
    BridgeTimeout,
    HandshakeTimeout,
    ProtocolViolation,
    SpawnFailed,
    VersionMismatch,
)

PROTOCOL_VERSION = "1"

_EOF = object()


@dataclass(frozen=True)
class HelloMessage:
    protocol_version: str
    model_name: str
    max_window: Optional[int] = None
    max_horizon: Optional[int] = None


class BridgeSession:
    """Live connection to a bridge server process."""

    def __init__(self, proc: subprocess.Popen, hello: HelloMessage, request_timeout: float,
                 lines: queue.Queue):
        self.proc = proc
        self.hello = hello
        self.request_timeout = request_timeout
        self.total_request_seconds = 0.0
        self.request_count = 0
        self.answered_ids: set = set()
        self._next_id = 0
        self._lines = lines
        self._closed = False
        self._exit_status: Optional[str] = None

    def next_id(self) -> int:
        self._next_id += 1
        return self._next_id

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        shutdown(self)


def _attach_reader(proc: subprocess.Popen) -> queue.Queue:
    lines: queue.Queue = queue.Queue()

    def pump():
        for line in proc.stdout:
            lines.put(line)
        lines.put(_EOF)

    threading.Thread(target=pump, daemon=True).start()
    return lines


def _read_line(lines: queue.Queue, timeout: float, timeout_error: Exception) -> str:
    try:
        item = lines.get(timeout=timeout)
    except queue.Empty:
        raise timeout_error from None
    if item is _EOF:
        raise BridgeBrokenPipe("bridge server closed its stdout")
    return item


def spawn_and_handshake(command: Sequence[str], handshake_timeout: float = 10.0,
                        request_timeout: float = 300.0) -> BridgeSession:
    """Start the server process and validate its hello line."""
    try:
        proc = subprocess.Popen(
            list(command), stdin=subprocess.PIPE, stdout=subprocess.PIPE,
            text=True, bufsize=1,
        )
    except OSError as exc:
        raise SpawnFailed(f"cannot start {command!r}: {exc}") from exc

    lines = _attach_reader(proc)
    try:
        first = _read_line(lines, handshake_timeout,
                           HandshakeTimeout(f"no hello within {handshake_timeout}s"))
    except BridgeBrokenPipe:
        raise SpawnFailed(f"server exited before hello (rc={proc.poll()})") from None
    except HandshakeTimeout:
        proc.kill()
        raise
    try:
        msg = json.loads(first)
        hello_body = msg["hello"]
        hello = HelloMessage(
            protocol_version=str(hello_body["protocol_version"]),
            model_name=hello_body["model_name"],
            max_window=hello_body.get("max_window"),
            max_horizon=hello_body.get("max_horizon"),
        )
    except (ValueError, KeyError, TypeError) as exc:
        proc.kill()
        raise ProtocolViolation(f"bad hello line: {first!r}") from exc
    if hello.protocol_version != PROTOCOL_VERSION:
        proc.kill()
        raise VersionMismatch(
            f"server speaks protocol {hello.protocol_version!r}, client needs {PROTOCOL_VERSION!r}"
        )

    return BridgeSession(proc, hello, request_timeout, lines)


def bridge_forecast(session: BridgeSession, window, horizon: int) -> tuple:
    """Send one request, block for its response; returns (values, latency_s)."""
    req_id = session.next_id()
    line = json.dumps({"id": req_id, "window": [float(v) for v in window], "horizon": horizon})
    start = time.monotonic()
    try:
        session.proc.stdin.write(line + "\n")
        session.proc.stdin.flush()
    except (BrokenPipeError, OSError) as exc:
        raise BridgeBrokenPipe(f"bridge server stdin closed: {exc}") from exc

    raw = _read_line(session._lines, session.request_timeout,
                     BridgeTimeout(f"no response to id {req_id} within {session.request_timeout}s"))
    try:
        msg = json.loads(raw)
    except ValueError as exc:
        raise ProtocolViolation(f"server wrote a non-JSON line: {raw!r}") from exc
    if not isinstance(msg, dict) or "id" not in msg:
        raise ProtocolViolation(f"response without id: {raw!r}")
    if msg["id"] in session.answered_ids:
        raise ProtocolViolation(f"duplicate response for id {msg['id']}")
    if msg["id"] != req_id:
        raise ProtocolViolation(f"response id {msg['id']} does not match request id {req_id}")
    session.answered_ids.add(req_id)

    if "error" in msg:
        err = msg["error"]
        raise BridgeError(str(err.get("code", "unknown")), str(err.get("message", "")))
    pred = msg.get("pred")
    if not isinstance(pred, list) or len(pred) != horizon:
        raise ProtocolViolation(f"pred must be a length-{horizon} array: {raw!r}")
    values: List[float] = []
    for v in pred:
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(float(v)):
            raise ProtocolViolation(f"non-finite or non-numeric pred entry: {v!r}")
        values.append(float(v))

    latency = time.monotonic() - start
    session.total_request_seconds += latency
    session.request_count += 1
    return values, latency


def shutdown(session: BridgeSession, timeout: float = 5.0) -> str:
    """Close stdin, wait, then escalate to kill. Idempotent, never raises."""
    if session._closed:
        return session._exit_status or "unknown"
    session._closed = True
    proc = session.proc
    try:
        if proc.stdin and not proc.stdin.closed:
            proc.stdin.close()
    except OSError:
        pass
    try:
        rc = proc.wait(timeout=timeout)
        status = f"exited:{rc}"
    except subprocess.TimeoutExpired:
        proc.terminate()
        try:
            proc.wait(timeout=2.0)
            status = "killed"
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait()
            status = "killed"
    session._exit_status = status
    return status
