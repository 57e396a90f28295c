"""Worker loop: receive an assignment, then answer each START_ROUND with a coded gradient."""

from __future__ import annotations

import logging
import socket
import time
from typing import Optional

from ..decode import encode_local, synthetic_partials
from .protocol import (Assignment, FrameSocket, Message, MsgType, ProtocolError, gradient_message,
                       unpack_assign)

log = logging.getLogger(__name__)


def connect(host: str, port: int, attempts: int = 20, backoff: float = 0.1) -> socket.socket:
    last: Optional[Exception] = None
    for attempt in range(attempts):
        try:
            return socket.create_connection((host, port), timeout=5.0)
        except OSError as exc:
            last = exc
            time.sleep(backoff * (attempt + 1))
    raise ConnectionError(f"could not reach master at {host}:{port}: {last}")


def compute_coded(assignment: Assignment, round_index: int):
    """Coded gradient for one round, or None for a worker holding no partitions."""
    if not assignment.partitions:
        return None
    partials = synthetic_partials(assignment.seed, round_index, assignment.partitions, assignment.dim)
    return encode_local(assignment.row, partials, assignment.dim)


class _Worker:
    def __init__(self, conn: FrameSocket, worker_id: int, delay_factor: float):
        self.conn = conn
        self.worker_id = worker_id
        self.delay_factor = delay_factor
        self.assignment: Optional[Assignment] = None
        self.pending: list[Message] = []

    def next_message(self, timeout=None) -> Optional[Message]:
        if self.pending:
            return self.pending.pop(0)
        return self.conn.recv(timeout)

    def superseded(self, round_index: int, until: float) -> bool:
        """Wait until ``until`` unless the master finishes or moves past this round first."""
        while True:
            remaining = until - time.monotonic()
            if remaining <= 0:
                return False
            msg = self.conn.recv(remaining)
            if msg is None:
                return False
            if msg.type == MsgType.ROUND_DONE and msg.round == round_index:
                return True
            self.pending.append(msg)
            if msg.type == MsgType.SHUTDOWN or (msg.type == MsgType.START_ROUND and msg.round > round_index):
                return True

    def work(self, round_index: int):
        if self.assignment is None:
            raise ProtocolError("START_ROUND before ASSIGN")
        started = time.monotonic()
        coded = compute_coded(self.assignment, round_index)
        until = started + self.assignment.compute_seconds * self.delay_factor
        if self.superseded(round_index, until):
            log.debug("worker %d: round %d finished without us", self.worker_id, round_index)
            return
        self.conn.send(gradient_message(round_index, self.worker_id, coded))

    def serve(self) -> None:
        self.conn.send(Message(MsgType.HELLO, 0, self.worker_id))
        while True:
            msg = self.next_message()
            if msg.type == MsgType.ASSIGN:
                self.assignment = unpack_assign(msg.payload)
                log.debug("worker %d: assigned partitions %s", self.worker_id, self.assignment.partitions)
            elif msg.type == MsgType.START_ROUND:
                if any(p.type in (MsgType.START_ROUND, MsgType.SHUTDOWN) for p in self.pending):
                    continue  # already behind; skip straight to the newer instruction
                self.work(msg.round)
            elif msg.type == MsgType.SHUTDOWN:
                return
            # ROUND_DONE for rounds we already answered needs no action


def run_worker(host: str, port: int, worker_id: int, delay_factor: float = 1.0,
               reconnect_attempts: int = 3) -> int:
    """Serve the master until SHUTDOWN. Returns a process exit code."""
    failures = 0
    while True:
        try:
            sock = connect(host, port)
        except ConnectionError as exc:
            log.error("worker %d: %s", worker_id, exc)
            return 2
        sock.settimeout(None)
        conn = FrameSocket(sock)
        try:
            _Worker(conn, worker_id, delay_factor).serve()
            return 0
        except (ConnectionError, OSError, ProtocolError) as exc:
            failures += 1
            log.warning("worker %d: connection lost (%s), attempt %d/%d", worker_id, exc,
                        failures, reconnect_attempts)
            if failures > reconnect_attempts:
                return 2
            time.sleep(0.2 * failures)
        finally:
            conn.close()
