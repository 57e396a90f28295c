"""Binary framing for master/worker messages.

Every frame is::

    u32 length      little-endian, bytes that follow (header + payload)
    u8  type        MsgType
    u32 round
    u16 worker_id
    ...payload      length - 7 bytes

Payloads (all little-endian):

    HELLO, START_ROUND, SHUTDOWN   empty
    ASSIGN          u32 dim, u64 seed, f64 compute_seconds, u32 k, u32 n,
                    n x u32 partition ids (1-based), k x f64 coding row
    CODED_GRADIENT  dim x f64, or empty from a worker holding no partitions
    ROUND_DONE      u8 status (1 decoded, 0 failed)
"""

from __future__ import annotations

import asyncio
import socket
import struct
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

LENGTH = struct.Struct("<I")
HEADER = struct.Struct("<BIH")
MAX_FRAME = 64 * 1024 * 1024

_ASSIGN_HEAD = struct.Struct("<IQdII")


class ProtocolError(ValueError):
    pass


class MsgType(IntEnum):
    HELLO = 1
    ASSIGN = 2
    START_ROUND = 3
    CODED_GRADIENT = 4
    ROUND_DONE = 5
    SHUTDOWN = 6


@dataclass(frozen=True)
class Message:
    type: MsgType
    round: int = 0
    worker_id: int = 0
    payload: bytes = b""


@dataclass(frozen=True)
class Assignment:
    dim: int
    seed: int
    compute_seconds: float
    partitions: tuple[int, ...]
    row: np.ndarray

    @property
    def k(self) -> int:
        return len(self.row)


def encode_message(msg: Message) -> bytes:
    body = HEADER.pack(int(msg.type), msg.round, msg.worker_id) + msg.payload
    return LENGTH.pack(len(body)) + body


def decode_body(body: bytes) -> Message:
    if len(body) < HEADER.size:
        raise ProtocolError(f"frame of {len(body)} bytes is shorter than the header")
    tag, round_index, worker_id = HEADER.unpack_from(body)
    try:
        kind = MsgType(tag)
    except ValueError:
        raise ProtocolError(f"unknown message type {tag}") from None
    return Message(kind, round_index, worker_id, bytes(body[HEADER.size:]))


def decode_message(frame: bytes) -> Message:
    """Parse one complete frame including its length prefix."""
    if len(frame) < LENGTH.size:
        raise ProtocolError("truncated length prefix")
    (length,) = LENGTH.unpack_from(frame)
    if length != len(frame) - LENGTH.size:
        raise ProtocolError(f"length prefix says {length} bytes, frame carries {len(frame) - LENGTH.size}")
    return decode_body(frame[LENGTH.size:])


def _check_length(length: int):
    if length < HEADER.size or length > MAX_FRAME:
        raise ProtocolError(f"bad frame length {length}")


def pack_assign(a: Assignment) -> bytes:
    row = np.asarray(a.row, dtype="<f8")
    return (_ASSIGN_HEAD.pack(a.dim, a.seed, a.compute_seconds, len(row), len(a.partitions))
            + struct.pack(f"<{len(a.partitions)}I", *a.partitions) + row.tobytes())


def unpack_assign(payload: bytes) -> Assignment:
    if len(payload) < _ASSIGN_HEAD.size:
        raise ProtocolError("ASSIGN payload too short")
    dim, seed, seconds, k, n = _ASSIGN_HEAD.unpack_from(payload)
    expected = _ASSIGN_HEAD.size + 4 * n + 8 * k
    if len(payload) != expected:
        raise ProtocolError(f"ASSIGN payload is {len(payload)} bytes, expected {expected}")
    partitions = struct.unpack_from(f"<{n}I", payload, _ASSIGN_HEAD.size)
    row = np.frombuffer(payload, dtype="<f8", count=k, offset=_ASSIGN_HEAD.size + 4 * n).astype(float)
    return Assignment(dim, seed, seconds, tuple(partitions), row)


def pack_vector(values: np.ndarray) -> bytes:
    return np.asarray(values, dtype="<f8").tobytes()


def unpack_vector(payload: bytes, dim: int) -> np.ndarray:
    if len(payload) != 8 * dim:
        raise ProtocolError(f"vector payload is {len(payload)} bytes, expected {8 * dim}")
    return np.frombuffer(payload, dtype="<f8").astype(float)


def assign_message(worker_id: int, a: Assignment) -> Message:
    return Message(MsgType.ASSIGN, 0, worker_id, pack_assign(a))


def gradient_message(round_index: int, worker_id: int, values) -> Message:
    payload = b"" if values is None else pack_vector(values)
    return Message(MsgType.CODED_GRADIENT, round_index, worker_id, payload)


def round_done_message(round_index: int, decoded: bool) -> Message:
    return Message(MsgType.ROUND_DONE, round_index, 0, bytes([1 if decoded else 0]))


async def read_message(reader: asyncio.StreamReader) -> Message:
    """Read one frame; raises IncompleteReadError on EOF and ProtocolError on garbage."""
    (length,) = LENGTH.unpack(await reader.readexactly(LENGTH.size))
    _check_length(length)
    return decode_body(await reader.readexactly(length))


async def write_message(writer: asyncio.StreamWriter, msg: Message):
    writer.write(encode_message(msg))
    await writer.drain()


class FrameSocket:
    """Blocking frame reader/writer over a connected socket."""

    def __init__(self, sock: socket.socket):
        self.sock = sock
        self._buf = bytearray()

    def send(self, msg: Message):
        self.sock.sendall(encode_message(msg))

    def _take(self) -> Message | None:
        if len(self._buf) < LENGTH.size:
            return None
        (length,) = LENGTH.unpack_from(self._buf)
        _check_length(length)
        end = LENGTH.size + length
        if len(self._buf) < end:
            return None
        body = bytes(self._buf[LENGTH.size:end])
        del self._buf[:end]
        return decode_body(body)

    def _fill(self):
        chunk = self.sock.recv(65536)
        if not chunk:
            raise ConnectionError("peer closed the connection")
        self._buf += chunk

    def recv(self, timeout: float | None = None) -> Message | None:
        """Next message; None if ``timeout`` seconds pass without a complete frame."""
        msg = self._take()
        if msg is not None:
            return msg
        self.sock.settimeout(timeout)
        try:
            while True:
                self._fill()
                msg = self._take()
                if msg is not None:
                    return msg
        except (socket.timeout, BlockingIOError):
            return None
        finally:
            self.sock.settimeout(None)

    def close(self):
        try:
            self.sock.close()
        except OSError:
            pass
