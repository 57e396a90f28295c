"""Throughput-proportional partition counts and cyclic placement of partition copies."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .profiles import ClusterConfig


class AllocationError(ValueError):
    pass


class InfeasibleAllocation(AllocationError):
    """k(s+1) copies cannot be spread over m workers with at most k each."""


@dataclass(frozen=True)
class Allocation:
    counts: tuple[int, ...]
    # 1-based partition indices, in cyclic order
    assignments: tuple[tuple[int, ...], ...]
    k: int

    @property
    def m(self) -> int:
        return len(self.counts)

    @property
    def replication(self) -> int:
        return sum(self.counts) // self.k

    def partition_sets(self) -> list[frozenset[int]]:
        return [frozenset(a) for a in self.assignments]


@dataclass(frozen=True)
class SupportStructure:
    mask: np.ndarray  # (m, k) bool

    def __post_init__(self):
        mask = np.array(self.mask, dtype=bool)
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)

    @property
    def m(self) -> int:
        return self.mask.shape[0]

    @property
    def k(self) -> int:
        return self.mask.shape[1]

    def row_counts(self) -> list[int]:
        return [int(x) for x in self.mask.sum(axis=1)]

    def column_counts(self) -> list[int]:
        return [int(x) for x in self.mask.sum(axis=0)]

    def workers_of(self, partition: int) -> list[int]:
        """0-based worker rows holding a 0-based partition column."""
        return [int(i) for i in np.flatnonzero(self.mask[:, partition])]

    def to_text(self) -> str:
        """Star/zero rendering, one worker per line."""
        return "".join(" ".join("*" if x else "0" for x in row) + "\n" for row in self.mask)

    def __eq__(self, other):
        return isinstance(other, SupportStructure) and np.array_equal(self.mask, other.mask)

    def __hash__(self):
        return hash(self.mask.tobytes())


def largest_remainder_counts(weights: Sequence[float], total: int, cap: int) -> list[int]:
    """Round total*w_i/sum(w) to integers summing to ``total``, each at most ``cap``.

    Fractional parts are handed out largest first, ties going to the lower index.
    Workers already at ``cap`` are skipped and the surplus moves down the ranking.
    """
    m = len(weights)
    if total > m * cap:
        raise InfeasibleAllocation(
            f"{total} partition copies cannot fit on {m} workers holding at most {cap} each "
            "(too many stragglers for this cluster)")
    exact_weights = [Fraction(w) for w in weights]
    norm = sum(exact_weights)
    exact = [total * w / norm for w in exact_weights]
    counts = [min(int(x), cap) for x in exact]
    ranking = sorted(range(m), key=lambda i: (-(exact[i] - int(exact[i])), i))
    deficit = total - sum(counts)
    while deficit > 0:
        progressed = False
        for i in ranking:
            if deficit == 0:
                break
            if counts[i] < cap:
                counts[i] += 1
                deficit -= 1
                progressed = True
        if not progressed:  # unreachable given the capacity check above
            raise InfeasibleAllocation("could not place all partition copies")
    return counts


def compute_partition_counts(config: ClusterConfig) -> list[int]:
    """Per-worker partition counts n_i proportional to throughput, summing to k(s+1)."""
    total = config.k * (config.s + 1)
    counts = largest_remainder_counts(config.throughputs, total, config.k)
    idle = [i + 1 for i, n in enumerate(counts) if n == 0]
    if idle:
        warnings.warn(f"workers {idle} receive no partitions; redundancy shifts to the others",
                      stacklevel=2)
    return counts


def cyclic_allocate(counts: Sequence[int], k: int) -> Allocation:
    """Hand out partition copies cyclically: worker i takes the next n_i indices mod k."""
    counts = tuple(int(n) for n in counts)
    if k < 1:
        raise AllocationError("k must be >= 1")
    if any(n < 0 or n > k for n in counts):
        raise AllocationError(f"each count must lie in [0, {k}], got {list(counts)}")
    if sum(counts) % k:
        raise AllocationError(f"sum of counts {sum(counts)} is not a multiple of k={k}")
    assignments = []
    offset = 0
    for n in counts:
        assignments.append(tuple((offset + t - 1) % k + 1 for t in range(1, n + 1)))
        offset += n
    return Allocation(counts, tuple(assignments), k)


def support_structure(alloc: Allocation, m: int | None = None, k: int | None = None) -> SupportStructure:
    m = alloc.m if m is None else m
    k = alloc.k if k is None else k
    if m != alloc.m or k != alloc.k:
        raise AllocationError("allocation shape does not match (m, k)")
    mask = np.zeros((m, k), dtype=bool)
    for i, parts in enumerate(alloc.assignments):
        for j in parts:
            mask[i, j - 1] = True
    return SupportStructure(mask)


def allocation_from_support(support: SupportStructure) -> Allocation:
    """Recover an Allocation (partition sets sorted ascending) from a mask."""
    assignments = tuple(tuple(int(j) + 1 for j in np.flatnonzero(row)) for row in support.mask)
    return Allocation(tuple(len(a) for a in assignments), assignments, support.k)


def allocate(config: ClusterConfig) -> Allocation:
    return cyclic_allocate(compute_partition_counts(config), config.k)
