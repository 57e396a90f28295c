"""Deterministic round simulation over heterogeneous workers with injected stragglers.

Time model: worker i computes for ||b_i||_0 * partition_size / c_i time units,
scaled by ``delay_factor`` if it is a delay straggler and infinite if it failed,
then its result arrives after the worker's fixed latency. The master attempts a
decode after every arrival; the round ends at the first successful decode.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from itertools import combinations
from math import comb
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .coding import (CodingError, CodingStrategy, CombinatorialGuard, DecodingVector,
                     EXHAUSTIVE_MAX_M, MAX_PATTERNS)
from .decode import earliest_decodable, solve_decoding_vector
from .profiles import ClusterConfig
from . import schemes

STRAGGLER_KINDS = ("none", "delay", "failure")
RANDOM = "random"


@dataclass(frozen=True)
class StragglerModel:
    kind: str = "none"
    # explicit 1-based worker ids, or RANDOM for a fresh uniform draw of ``count`` workers each round
    targets: Union[tuple[int, ...], str] = ()
    delay_factor: float = 1.0
    seed: int = 0
    count: Optional[int] = None

    def __post_init__(self):
        if self.kind not in STRAGGLER_KINDS:
            raise ValueError(f"unknown straggler kind {self.kind!r}")
        if self.delay_factor < 1:
            raise ValueError("delay_factor must be >= 1")
        if self.targets != RANDOM:
            object.__setattr__(self, "targets", tuple(sorted(int(t) for t in self.targets)))

    def stragglers(self, m: int, round_index: int, default_count: int) -> tuple[int, ...]:
        if self.kind == "none":
            return ()
        if self.targets == RANDOM:
            count = default_count if self.count is None else self.count
            rng = np.random.default_rng([self.seed, round_index])
            return tuple(sorted(int(w) + 1 for w in rng.choice(m, size=count, replace=False)))
        bad = [t for t in self.targets if not 1 <= t <= m]
        if bad:
            raise ValueError(f"straggler targets {bad} are not worker ids in 1..{m}")
        return self.targets


@dataclass
class RoundTrace:
    round_index: int
    compute_times: list[float]
    arrival_times: list[float]
    stragglers: tuple[int, ...]
    makespan: float
    success: bool
    vector: Optional[DecodingVector] = None
    # workers that had reported when the decode succeeded
    arrived: tuple[int, ...] = ()

    @property
    def decode_time(self) -> float:
        return self.makespan

    @property
    def used(self) -> frozenset[int]:
        return self.vector.support if self.vector is not None else frozenset()


class UndecodableRound(CodingError):
    pass


def simulate_round(strategy: CodingStrategy, throughputs: Sequence[float], model: StragglerModel,
                   round_index: int, latencies: Optional[Sequence[float]] = None) -> RoundTrace:
    m = strategy.m
    latencies = latencies if latencies is not None else [0.0] * m
    stragglers = model.stragglers(m, round_index, strategy.s)
    compute = list(strategy.compute_times(throughputs))
    for w in stragglers:
        if model.kind == "failure":
            compute[w - 1] = math.inf
        elif model.kind == "delay":
            compute[w - 1] *= model.delay_factor
    arrival = [t + l for t, l in zip(compute, latencies)]
    order = sorted((w for w in range(1, m + 1) if math.isfinite(arrival[w - 1])),
                   key=lambda w: (arrival[w - 1], w))
    arrived: list[int] = []
    for w in order:
        arrived.append(w)
        vec = solve_decoding_vector(strategy, arrived)
        if vec is not None:
            return RoundTrace(round_index, compute, arrival, stragglers, arrival[w - 1], True, vec, tuple(arrived))
    return RoundTrace(round_index, compute, arrival, stragglers, math.inf, False, None, tuple(arrived))


def worst_case_time(strategy: CodingStrategy, throughputs: Sequence[float], s: Optional[int] = None) -> float:
    """max over straggler sets |S| <= s of T(B, S); inf if some pattern cannot decode."""
    s = strategy.s if s is None else s
    m = strategy.m
    if m > EXHAUSTIVE_MAX_M or sum(comb(m, r) for r in range(s + 1)) > MAX_PATTERNS:
        raise CombinatorialGuard(f"worst-case enumeration limited to m <= {EXHAUSTIVE_MAX_M}")
    worst = 0.0
    for r in range(s + 1):
        for S in combinations(range(1, m + 1), r):
            found = earliest_decodable(strategy, throughputs, S)
            if found is None:
                return math.inf
            worst = max(worst, found.time)
    return worst


def optimal_time(config: ClusterConfig) -> float:
    """Lower bound (s+1)k / sum(c) met by the heter-aware scheme."""
    return (config.s + 1) * config.k / sum(config.throughputs)


def _round_usage(trace: RoundTrace) -> tuple[float, float]:
    busy = sum(min(t, trace.makespan) for t in trace.compute_times if math.isfinite(t))
    return busy, trace.makespan * len(trace.compute_times)


def resource_usage(traces: Iterable[RoundTrace]) -> float:
    """Total busy compute time over total worker wall time, across decoded rounds.

    A worker's wall time in a round is the round makespan; failed workers are never busy.
    Rounds that did not decode have no makespan and are skipped.
    """
    traces = list(traces)
    if not traces:
        raise ValueError("need at least one round")
    busy = total = 0.0
    for trace in traces:
        if trace.success:
            b, t = _round_usage(trace)
            busy += b
            total += t
    return busy / total if total > 0 else 0.0


SCHEME_ORDER = ("naive", "cyclic", "heter_aware", "group_based")
CSV_COLUMNS = ("scheme", "round", "makespan", "decode_success", "resource_usage", "straggler_set", "note")


@dataclass
class SchemeResult:
    scheme: str
    traces: list[RoundTrace] = field(default_factory=list)
    note: str = ""
    error: Optional[str] = None

    @property
    def success_rate(self) -> float:
        return sum(t.success for t in self.traces) / len(self.traces) if self.traces else math.nan

    @property
    def mean_makespan(self) -> float:
        done = [t.makespan for t in self.traces if t.success]
        if not self.traces:
            return math.nan
        return sum(done) / len(done) if len(done) == len(self.traces) else math.inf

    @property
    def usage(self) -> float:
        return resource_usage(self.traces) if self.traces else math.nan


def scheme_strategy(config: ClusterConfig, scheme: str, seed: int) -> CodingStrategy:
    # naive is a baseline here, so it is built with s = 0 whatever the config says
    if scheme == "naive":
        return schemes.naive_strategy(config)
    return schemes.build_strategy(config, scheme, seed)


def run_rounds(strategy: CodingStrategy, config: ClusterConfig, model: StragglerModel, rounds: int) -> list[RoundTrace]:
    latencies = [w.latency for w in config.ordered()]
    return [simulate_round(strategy, config.throughputs, model, r, latencies) for r in range(rounds)]


def compare_schemes(config: ClusterConfig, model: StragglerModel, rounds: int, seed: int,
                    scheme_names: Sequence[str] = SCHEME_ORDER) -> list[SchemeResult]:
    """Simulate every scheme on the same straggler draws."""
    if model.targets == RANDOM and model.count is None:
        model = StragglerModel(model.kind, RANDOM, model.delay_factor, model.seed, config.s)
    results = []
    for name in scheme_names:
        result = SchemeResult(name)
        try:
            strategy = scheme_strategy(config, name, seed)
        except (CodingError, ValueError) as exc:
            result.error = str(exc)
            result.note = f"construction failed: {exc}"
            results.append(result)
            continue
        result.note = "; ".join(strategy.notes)
        result.traces = run_rounds(strategy, config, model, rounds)
        results.append(result)
    return results


def _fmt(x: float) -> str:
    return repr(float(x))


def rounds_csv(results: Sequence[SchemeResult]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for result in results:
        for trace in result.traces:
            writer.writerow([
                result.scheme,
                trace.round_index,
                _fmt(trace.makespan),
                int(trace.success),
                _fmt(resource_usage([trace])) if trace.success else "nan",
                " ".join(str(w) for w in trace.stragglers),
                result.note,
            ])
    return buf.getvalue()


def summary_csv(results: Sequence[SchemeResult]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("scheme", "rounds", "mean_makespan", "decode_success_rate", "resource_usage", "note"))
    for result in results:
        writer.writerow([result.scheme, len(result.traces), _fmt(result.mean_makespan),
                         _fmt(result.success_rate), _fmt(result.usage), result.note])
    return buf.getvalue()
