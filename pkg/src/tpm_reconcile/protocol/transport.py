"""Blocking byte-stream transport for sessions.

Any object with ``sendall(bytes)`` and ``recv(n) -> bytes`` works: a TCP
socket, one end of ``socket.socketpair()``, or a test double.
"""

from __future__ import annotations

import logging
import socket
from typing import Protocol

from ..codec import KeyMaterial
from .messages import HEADER, Message, decode_payload, encode_frame, parse_header
from .session import Session, SessionConfig, SessionResult

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 30.0


class TransportError(OSError):
    """The byte stream failed, closed early, or timed out."""


class ByteStream(Protocol):
    def sendall(self, data: bytes) -> None: ...

    def recv(self, n: int) -> bytes: ...


class Recorder:
    """Wraps a stream and keeps a copy of every byte sent and received."""

    def __init__(self, stream: ByteStream):
        self.stream = stream
        self.sent = bytearray()
        self.received = bytearray()

    def sendall(self, data: bytes) -> None:
        self.sent += data
        self.stream.sendall(data)

    def recv(self, n: int) -> bytes:
        data = self.stream.recv(n)
        self.received += data
        return data

    def settimeout(self, timeout: float | None) -> None:
        if hasattr(self.stream, "settimeout"):
            self.stream.settimeout(timeout)


def _recv_exact(stream: ByteStream, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        try:
            chunk = stream.recv(n - len(buf))
        except socket.timeout as exc:
            raise TransportError("timed out waiting for peer") from exc
        except OSError as exc:
            raise TransportError(str(exc)) from exc
        if not chunk:
            raise TransportError("peer closed the connection")
        buf += chunk
    return bytes(buf)


def send_message(stream: ByteStream, msg: Message) -> None:
    try:
        stream.sendall(encode_frame(msg))
    except OSError as exc:
        raise TransportError(str(exc)) from exc


def recv_message(stream: ByteStream) -> Message:
    kind, length = parse_header(_recv_exact(stream, HEADER.size))
    return decode_payload(kind, _recv_exact(stream, length))


def run_session(
    key: KeyMaterial,
    config: SessionConfig,
    transport: ByteStream,
    timeout: float | None = DEFAULT_TIMEOUT,
) -> SessionResult:
    """Run one party of a session to completion over ``transport``.

    Raises a :class:`SessionAborted` subclass when either side aborts and
    :class:`TransportError` when the stream fails.
    """
    if timeout is not None and hasattr(transport, "settimeout"):
        transport.settimeout(timeout)
    session = Session(key, config)
    out, _ = session.step(None)
    for msg in out:
        send_message(transport, msg)
    while not session.finished:
        msg = recv_message(transport)
        out, phase = session.step(msg)
        for reply in out:
            send_message(transport, reply)
        log.debug("%s <- %s => %s", config.role.value, type(msg).__name__, phase)
    return session.result()


def listen(host: str, port: int, timeout: float | None = DEFAULT_TIMEOUT) -> socket.socket:
    """Accept a single peer on ``host:port``."""
    with socket.create_server((host, port), reuse_port=False) as server:
        server.settimeout(timeout)
        try:
            conn, _ = server.accept()
        except socket.timeout as exc:
            raise TransportError(f"no peer connected to {host}:{port}") from exc
    return conn


def connect(host: str, port: int, timeout: float | None = DEFAULT_TIMEOUT) -> socket.socket:
    try:
        return socket.create_connection((host, port), timeout=timeout)
    except OSError as exc:
        raise TransportError(f"cannot connect to {host}:{port}: {exc}") from exc
