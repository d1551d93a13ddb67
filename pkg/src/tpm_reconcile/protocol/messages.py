"""Protocol messages and their length-prefixed binary frames.

Frame layout::

    b"TP" | version:u8 | type:u8 | payload_length:u32be | payload

All integers are big-endian. Tau values travel as 0x01 (+1) or 0xFF (-1).
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from typing import Iterator, Union

import numpy as np

MAGIC = b"TP"
VERSION = 0x01
HEADER = struct.Struct(">2sBBI")
MAX_PAYLOAD = 1 << 24


class FrameError(ValueError):
    """Bytes on the wire do not form a valid frame."""


class MessageType(enum.IntEnum):
    HELLO = 0x01
    HELLO_ACK = 0x02
    INPUT = 0x03
    OUTPUT = 0x04
    DIGEST = 0x05
    DIGEST_ACK = 0x06
    DONE = 0x07
    ABORT = 0x08


class AbortReason(enum.IntEnum):
    PARAMETER_MISMATCH = 1
    RETRY_EXHAUSTED = 2
    ITERATION_BUDGET = 3
    PROTOCOL_VIOLATION = 4


@dataclass(frozen=True)
class Hello:
    K: int
    N: int
    L: int
    key_length_bits: int
    session_id: bytes


@dataclass(frozen=True)
class HelloAck:
    accepted: bool


@dataclass(frozen=True)
class Input:
    iteration: int
    retry: int
    tau: int
    packed_x: bytes


@dataclass(frozen=True)
class Output:
    iteration: int
    retry: int
    tau: int


@dataclass(frozen=True)
class Digest:
    iteration: int
    digest: bytes


@dataclass(frozen=True)
class DigestAck:
    matched: bool


@dataclass(frozen=True)
class Done:
    iterations_used: int


@dataclass(frozen=True)
class Abort:
    reason: AbortReason


Message = Union[Hello, HelloAck, Input, Output, Digest, DigestAck, Done, Abort]

_HELLO = struct.Struct(">HHBI16s")
_ITER_RETRY_TAU = struct.Struct(">IBB")
_DIGEST = struct.Struct(">I32s")
_U8 = struct.Struct(">B")
_U32 = struct.Struct(">I")


def _tau_byte(tau: int) -> int:
    if tau == 1:
        return 0x01
    if tau == -1:
        return 0xFF
    raise FrameError(f"tau must be +1 or -1, got {tau}")


def _tau_value(byte: int) -> int:
    if byte == 0x01:
        return 1
    if byte == 0xFF:
        return -1
    raise FrameError(f"invalid tau byte 0x{byte:02x}")


def _bool_value(byte: int) -> bool:
    if byte not in (0, 1):
        raise FrameError(f"invalid boolean byte 0x{byte:02x}")
    return bool(byte)


def pack_inputs(x: np.ndarray) -> bytes:
    """+1 -> 1, -1 -> 0, row-major, MSB first, final byte zero-padded."""
    return np.packbits(np.asarray(x).ravel() > 0).tobytes()


def unpack_inputs(packed: bytes, K: int, N: int) -> np.ndarray:
    count = K * N
    if len(packed) != packed_length(K, N):
        raise FrameError(f"packed input has {len(packed)} bytes, expected {packed_length(K, N)}")
    bits = np.unpackbits(np.frombuffer(packed, dtype=np.uint8), count=count)
    return (bits.astype(np.int8) * 2 - 1).reshape(K, N)


def packed_length(K: int, N: int) -> int:
    return -(-(K * N) // 8)


def encode_payload(msg: Message) -> tuple[MessageType, bytes]:
    if isinstance(msg, Hello):
        if len(msg.session_id) != 16:
            raise FrameError("session_id must be 16 bytes")
        return MessageType.HELLO, _HELLO.pack(msg.K, msg.N, msg.L, msg.key_length_bits, msg.session_id)
    if isinstance(msg, HelloAck):
        return MessageType.HELLO_ACK, _U8.pack(int(msg.accepted))
    if isinstance(msg, Input):
        head = _ITER_RETRY_TAU.pack(msg.iteration, msg.retry, _tau_byte(msg.tau))
        return MessageType.INPUT, head + msg.packed_x
    if isinstance(msg, Output):
        return MessageType.OUTPUT, _ITER_RETRY_TAU.pack(msg.iteration, msg.retry, _tau_byte(msg.tau))
    if isinstance(msg, Digest):
        if len(msg.digest) != 32:
            raise FrameError("digest must be 32 bytes")
        return MessageType.DIGEST, _DIGEST.pack(msg.iteration, msg.digest)
    if isinstance(msg, DigestAck):
        return MessageType.DIGEST_ACK, _U8.pack(int(msg.matched))
    if isinstance(msg, Done):
        return MessageType.DONE, _U32.pack(msg.iterations_used)
    if isinstance(msg, Abort):
        return MessageType.ABORT, _U8.pack(int(msg.reason))
    raise TypeError(f"not a protocol message: {msg!r}")


def _expect(payload: bytes, size: int, kind: MessageType) -> None:
    if len(payload) != size:
        raise FrameError(f"{kind.name} payload must be {size} bytes, got {len(payload)}")


def decode_payload(kind: int, payload: bytes) -> Message:
    try:
        kind = MessageType(kind)
    except ValueError:
        raise FrameError(f"unknown message type 0x{kind:02x}") from None
    if kind is MessageType.HELLO:
        _expect(payload, _HELLO.size, kind)
        return Hello(*_HELLO.unpack(payload))
    if kind is MessageType.HELLO_ACK:
        _expect(payload, 1, kind)
        return HelloAck(_bool_value(payload[0]))
    if kind is MessageType.INPUT:
        if len(payload) < _ITER_RETRY_TAU.size:
            raise FrameError("INPUT payload truncated")
        iteration, retry, tau = _ITER_RETRY_TAU.unpack_from(payload)
        return Input(iteration, retry, _tau_value(tau), bytes(payload[_ITER_RETRY_TAU.size :]))
    if kind is MessageType.OUTPUT:
        _expect(payload, _ITER_RETRY_TAU.size, kind)
        iteration, retry, tau = _ITER_RETRY_TAU.unpack(payload)
        return Output(iteration, retry, _tau_value(tau))
    if kind is MessageType.DIGEST:
        _expect(payload, _DIGEST.size, kind)
        return Digest(*_DIGEST.unpack(payload))
    if kind is MessageType.DIGEST_ACK:
        _expect(payload, 1, kind)
        return DigestAck(_bool_value(payload[0]))
    if kind is MessageType.DONE:
        _expect(payload, 4, kind)
        return Done(_U32.unpack(payload)[0])
    _expect(payload, 1, kind)
    try:
        return Abort(AbortReason(payload[0]))
    except ValueError:
        raise FrameError(f"unknown abort reason {payload[0]}") from None


def encode_frame(msg: Message) -> bytes:
    kind, payload = encode_payload(msg)
    return HEADER.pack(MAGIC, VERSION, kind, len(payload)) + payload


def parse_header(header: bytes) -> tuple[int, int]:
    """Validate a frame header; return ``(message_type, payload_length)``."""
    magic, version, kind, length = HEADER.unpack(header)
    if magic != MAGIC:
        raise FrameError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FrameError(f"unsupported version {version}")
    if length > MAX_PAYLOAD:
        raise FrameError(f"payload length {length} exceeds limit")
    return kind, length


def decode_frame(frame: bytes) -> Message:
    if len(frame) < HEADER.size:
        raise FrameError("frame shorter than header")
    kind, length = parse_header(frame[: HEADER.size])
    if len(frame) != HEADER.size + length:
        raise FrameError("frame length does not match header")
    return decode_payload(kind, frame[HEADER.size :])


class FrameBuffer:
    """Accumulates stream bytes and yields complete messages only."""

    def __init__(self) -> None:
        self._buf = bytearray()

    def feed(self, data: bytes) -> Iterator[Message]:
        self._buf += data
        while len(self._buf) >= HEADER.size:
            kind, length = parse_header(bytes(self._buf[: HEADER.size]))
            end = HEADER.size + length
            if len(self._buf) < end:
                break
            payload = bytes(self._buf[HEADER.size : end])
            del self._buf[:end]
            yield decode_payload(kind, payload)

    def __len__(self) -> int:
        return len(self._buf)
