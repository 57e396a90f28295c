"""Worker throughput profiles and cluster configuration files.

A cluster config is a JSON document::

    {
      "workers": [{"id": 1, "throughput": 1.0}, ...],
      "partitions": 7,
      "stragglers": 1,
      "seed": 0
    }

``seed`` is optional. A worker entry may also carry ``latency`` (a fixed
communication delay in time units, default 0).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence


class ConfigError(ValueError):
    """Raised when a cluster config cannot be parsed or violates an invariant."""


@dataclass(frozen=True)
class WorkerProfile:
    worker_id: int
    throughput: float
    latency: float = 0.0

    def __post_init__(self):
        if not self.throughput > 0:
            raise ConfigError(f"worker {self.worker_id}: throughput must be > 0, got {self.throughput}")
        if self.latency < 0:
            raise ConfigError(f"worker {self.worker_id}: latency must be >= 0, got {self.latency}")


@dataclass(frozen=True)
class ClusterConfig:
    workers: tuple[WorkerProfile, ...]
    num_partitions: int
    num_stragglers: int
    seed: Optional[int] = None
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "workers", tuple(self.workers))
        if not self.workers:
            raise ConfigError("at least one worker is required")
        ids = [w.worker_id for w in self.workers]
        if len(set(ids)) != len(ids):
            raise ConfigError("worker ids must be unique")
        if sorted(ids) != list(range(1, len(ids) + 1)):
            raise ConfigError("worker ids must be exactly 1..m")
        if self.num_partitions < 1:
            raise ConfigError("k must be >= 1")
        if self.num_stragglers < 0:
            raise ConfigError("s must be >= 0")
        if self.num_stragglers >= len(self.workers):
            raise ConfigError("s must be < m")

    @property
    def m(self) -> int:
        return len(self.workers)

    @property
    def k(self) -> int:
        return self.num_partitions

    @property
    def s(self) -> int:
        return self.num_stragglers

    @property
    def throughputs(self) -> list[float]:
        return [w.throughput for w in self.ordered()]

    def ordered(self) -> list[WorkerProfile]:
        return sorted(self.workers, key=lambda w: w.worker_id)

    def replace(self, **changes) -> "ClusterConfig":
        fields = dict(workers=self.workers, num_partitions=self.num_partitions,
                      num_stragglers=self.num_stragglers, seed=self.seed)
        fields.update(changes)
        return ClusterConfig(**fields)


def make_config(throughputs: Sequence[float], k: int, s: int, seed: Optional[int] = None,
                latencies: Optional[Sequence[float]] = None) -> ClusterConfig:
    """Build a config from a bare throughput list (workers are numbered from 1)."""
    latencies = latencies or [0.0] * len(throughputs)
    workers = [WorkerProfile(i + 1, float(c), float(l)) for i, (c, l) in enumerate(zip(throughputs, latencies))]
    return ClusterConfig(workers, k, s, seed)


def _require(doc: dict, key: str, kind):
    if key not in doc:
        raise ConfigError(f"missing key {key!r}")
    value = doc[key]
    if kind is int and (isinstance(value, bool) or not isinstance(value, int)):
        raise ConfigError(f"{key!r} must be an integer")
    if kind is list and not isinstance(value, list):
        raise ConfigError(f"{key!r} must be an array")
    return value


def config_from_dict(doc: dict) -> ClusterConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config document must be an object")
    workers = []
    for entry in _require(doc, "workers", list):
        if not isinstance(entry, dict) or "id" not in entry or "throughput" not in entry:
            raise ConfigError("each worker needs 'id' and 'throughput'")
        try:
            throughput = float(entry["throughput"])
            latency = float(entry.get("latency", 0.0))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"worker {entry.get('id')}: {exc}") from None
        workers.append(WorkerProfile(int(entry["id"]), throughput, latency))
    seed = doc.get("seed")
    if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int)):
        raise ConfigError("'seed' must be an integer")
    extra = {key: value for key, value in doc.items()
             if key not in ("workers", "partitions", "stragglers", "seed")}
    return ClusterConfig(workers, _require(doc, "partitions", int), _require(doc, "stragglers", int), seed, extra)


def config_to_dict(config: ClusterConfig) -> dict:
    workers = []
    for w in config.ordered():
        entry = {"id": w.worker_id, "throughput": w.throughput}
        if w.latency:
            entry["latency"] = w.latency
        workers.append(entry)
    doc = {"workers": workers, "partitions": config.k, "stragglers": config.s}
    if config.seed is not None:
        doc["seed"] = config.seed
    doc.update(config.extra)
    return doc


def load_config(document: str) -> ClusterConfig:
    """Parse and validate a JSON cluster config."""
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"parse error: {exc}") from None
    return config_from_dict(doc)


def dump_config(config: ClusterConfig) -> str:
    return json.dumps(config_to_dict(config), indent=2) + "\n"


def estimate_throughput(samples: Iterable[tuple[int, float]]) -> float:
    """Aggregate-rate estimate: total work units over total elapsed time."""
    samples = list(samples)
    if not samples:
        raise ValueError("need at least one (work_units, elapsed) sample")
    work = 0
    elapsed = 0.0
    for units, seconds in samples:
        if units <= 0:
            raise ValueError(f"work units must be positive, got {units}")
        if not seconds > 0:
            raise ValueError(f"elapsed time must be positive, got {seconds}")
        work += units
        elapsed += seconds
    return work / elapsed
