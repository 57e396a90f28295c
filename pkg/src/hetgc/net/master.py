"""Master: hand out assignments, run rounds, decode as soon as the arrived set allows it.

All round state lives in the coroutine that drives the rounds; connection
handlers only push (worker_id, message) events onto one queue, so every
update to the decode state happens in one place.
"""

from __future__ import annotations

import asyncio
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..coding import CodingStrategy, DecodingVector
from ..decode import recover_gradient, solve_decoding_vector
from .protocol import (Assignment, Message, MsgType, ProtocolError, assign_message, read_message,
                       round_done_message, unpack_vector, write_message)

log = logging.getLogger(__name__)

_GONE = object()


@dataclass
class RoundResult:
    round_index: int
    success: bool
    gradient: Optional[np.ndarray] = None
    vector: Optional[DecodingVector] = None
    # seconds since START_ROUND, per worker id, for results that arrived before the decision
    arrivals: dict[int, float] = field(default_factory=dict)
    decode_time: Optional[float] = None
    reason: str = ""

    @property
    def arrived(self) -> tuple[int, ...]:
        return tuple(sorted(self.arrivals, key=lambda w: (self.arrivals[w], w)))


@dataclass
class QuorumPolicy:
    round_timeout: float = 30.0
    connect_timeout: float = 30.0


def worker_assignments(strategy: CodingStrategy, dim: int, seed: int, time_scale: float) -> dict[int, Assignment]:
    """Per-worker ASSIGN contents; emulated compute time is time_scale x ||b_i||_0 * size / c_i."""
    times = strategy.compute_times() if strategy.throughputs is not None else [0.0] * strategy.m
    out = {}
    for w in range(1, strategy.m + 1):
        row = np.array(strategy.matrix[w - 1])
        parts = tuple(int(j) + 1 for j in np.flatnonzero(strategy.support.mask[w - 1]))
        out[w] = Assignment(dim, seed, times[w - 1] * time_scale, parts, row)
    return out


class Master:
    def __init__(self, strategy: CodingStrategy, dim: int, seed: int, policy: QuorumPolicy = QuorumPolicy(),
                 time_scale: float = 0.05, on_round: Optional[Callable[[RoundResult], None]] = None):
        self.strategy = strategy
        self.dim = dim
        self.seed = seed
        self.policy = policy
        self.on_round = on_round
        self.assignments = worker_assignments(strategy, dim, seed, time_scale)
        self.events: asyncio.Queue = asyncio.Queue()
        self.writers: dict[int, asyncio.StreamWriter] = {}
        self.assigned = False
        self.all_connected = asyncio.Event()
        self.server: Optional[asyncio.base_events.Server] = None

    async def start(self, host: str, port: int) -> int:
        self.server = await asyncio.start_server(self._handle, host, port)
        return self.server.sockets[0].getsockname()[1]

    async def _handle(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
        worker_id = None
        try:
            hello = await asyncio.wait_for(read_message(reader), self.policy.connect_timeout)
            if hello.type != MsgType.HELLO or not 1 <= hello.worker_id <= self.strategy.m:
                raise ProtocolError(f"expected HELLO from a known worker, got {hello}")
            if hello.worker_id in self.writers:
                raise ProtocolError(f"worker {hello.worker_id} is already connected")
            worker_id = hello.worker_id
            self.writers[worker_id] = writer
            log.info("worker %d connected", worker_id)
            if self.assigned:
                await write_message(writer, assign_message(worker_id, self.assignments[worker_id]))
            if len(self.writers) == self.strategy.m:
                self.all_connected.set()
            while True:
                msg = await read_message(reader)
                if msg.worker_id != worker_id:
                    raise ProtocolError(f"worker {worker_id} sent a frame tagged {msg.worker_id}")
                await self.events.put((worker_id, msg))
        except (asyncio.IncompleteReadError, ConnectionError, ProtocolError, asyncio.TimeoutError) as exc:
            log.info("dropping worker %s: %s", worker_id, exc or type(exc).__name__)
        finally:
            if worker_id is not None and self.writers.get(worker_id) is writer:
                del self.writers[worker_id]
                await self.events.put((worker_id, _GONE))
            writer.close()

    async def _send(self, worker_id: int, msg: Message):
        writer = self.writers.get(worker_id)
        if writer is None:
            return
        try:
            await write_message(writer, msg)
        except (ConnectionError, OSError) as exc:
            log.info("send to worker %d failed: %s", worker_id, exc)

    async def _broadcast(self, msg: Message):
        for w in sorted(self.writers):
            await self._send(w, msg)

    def _decodable_eventually(self, arrived: set[int]) -> bool:
        candidates = arrived | set(self.writers)
        return bool(candidates) and solve_decoding_vector(self.strategy, candidates) is not None

    async def run_round(self, r: int) -> RoundResult:
        # stale events from previous rounds are only relevant if they report a disconnect
        while not self.events.empty():
            self.events.get_nowait()
        started = time.monotonic()
        deadline = started + self.policy.round_timeout
        coded: dict[int, np.ndarray] = {}
        result = RoundResult(r, False)
        await self._broadcast(Message(MsgType.START_ROUND, r, 0))
        while True:
            if not self._decodable_eventually(set(coded)):
                result.reason = "too many workers lost"
                break
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                result.reason = "timeout"
                break
            try:
                worker_id, msg = await asyncio.wait_for(self.events.get(), remaining)
            except asyncio.TimeoutError:
                result.reason = "timeout"
                break
            if msg is _GONE or msg.type != MsgType.CODED_GRADIENT or msg.round != r or worker_id in coded:
                continue
            try:
                if msg.payload:
                    values = unpack_vector(msg.payload, self.dim)
                else:
                    if self.assignments[worker_id].partitions:
                        raise ProtocolError("empty gradient from a worker holding partitions")
                    values = np.zeros(self.dim)
            except ProtocolError as exc:
                log.warning("worker %d: %s; treating as straggler", worker_id, exc)
                writer = self.writers.pop(worker_id, None)
                if writer is not None:
                    writer.close()
                continue
            coded[worker_id] = values
            result.arrivals[worker_id] = time.monotonic() - started
            vec = solve_decoding_vector(self.strategy, coded)
            if vec is not None:
                result.success = True
                result.vector = vec
                result.gradient = recover_gradient(coded, vec)
                result.decode_time = result.arrivals[worker_id]
                break
        if not result.success:
            log.warning("round %d failed: %s", r, result.reason)
        await self._broadcast(round_done_message(r, result.success))
        return result

    async def run(self, rounds: int) -> list[RoundResult]:
        try:
            await asyncio.wait_for(self.all_connected.wait(), self.policy.connect_timeout)
        except asyncio.TimeoutError:
            log.warning("only workers %s connected", sorted(self.writers))
        self.assigned = True
        for w in sorted(self.writers):
            await self._send(w, assign_message(w, self.assignments[w]))
        results = []
        for r in range(rounds):
            result = await self.run_round(r)
            results.append(result)
            if self.on_round is not None:
                self.on_round(result)
        await self._broadcast(Message(MsgType.SHUTDOWN, rounds, 0))
        return results

    async def close(self):
        for writer in list(self.writers.values()):
            writer.close()
        if self.server is not None:
            self.server.close()
            await self.server.wait_closed()


async def serve(strategy: CodingStrategy, host: str, port: int, rounds: int, dim: int, seed: int,
                policy: QuorumPolicy = QuorumPolicy(), time_scale: float = 0.05,
                on_round=None, on_listening=None) -> list[RoundResult]:
    master = Master(strategy, dim, seed, policy, time_scale, on_round)
    bound = await master.start(host, port)
    log.info("master listening on %s:%d", host, bound)
    if on_listening is not None:
        on_listening(bound)
    try:
        return await master.run(rounds)
    finally:
        await master.close()


def run_master(strategy: CodingStrategy, host: str, port: int, rounds: int, dim: int = 8, seed: int = 0,
               policy: QuorumPolicy = QuorumPolicy(), time_scale: float = 0.05,
               on_round=None, on_listening=None) -> list[RoundResult]:
    return asyncio.run(serve(strategy, host, port, rounds, dim, seed, policy, time_scale, on_round, on_listening))
