"""Worker groups whose partition sets exactly tile the dataset, and the group-based strategy.

A group is stored as a sorted tuple of 1-based worker ids. Its members hold
pairwise-disjoint partition sets whose union is every partition, so summing
their coded results with unit weights yields the full gradient.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .allocation import Allocation, SupportStructure, allocation_from_support
from .coding import (CodingError, CodingStrategy, CombinatorialGuard, DecodingVector,
                     heter_aware_matrix)

Group = tuple[int, ...]

MAX_GROUP_SEARCH_M = 24


@dataclass(frozen=True)
class GroupSet:
    groups: tuple[Group, ...]

    def __len__(self):
        return len(self.groups)

    def __iter__(self):
        return iter(self.groups)

    @property
    def members(self) -> frozenset[int]:
        return frozenset(w for g in self.groups for w in g)


def is_exact_cover(members: Sequence[int], alloc: Allocation) -> bool:
    """True if the members' partition sets are pairwise disjoint and together cover 1..k."""
    seen: set[int] = set()
    for w in members:
        parts = set(alloc.assignments[w - 1])
        if not parts or parts & seen:
            return False
        seen |= parts
    return seen == set(range(1, alloc.k + 1))


def find_all_groups(alloc: Allocation) -> list[Group]:
    """Every exact cover of the partitions by worker assignment sets, sorted lexicographically."""
    if alloc.m > MAX_GROUP_SEARCH_M:
        raise CombinatorialGuard(f"group search is limited to m <= {MAX_GROUP_SEARCH_M}")
    sets = [frozenset(a) for a in alloc.assignments]

    @lru_cache(maxsize=None)
    def covers(remaining: frozenset) -> tuple[frozenset, ...]:
        # branch on the smallest uncovered partition so each cover is produced once
        if not remaining:
            return (frozenset(),)
        pivot = min(remaining)
        found = []
        for w, parts in enumerate(sets, start=1):
            if pivot in parts and parts <= remaining:
                for rest in covers(remaining - parts):
                    found.append(rest | {w})
        return tuple(found)

    groups = {tuple(sorted(c)) for c in covers(frozenset(range(1, alloc.k + 1)))}
    return sorted(groups)


def prune_groups(groups: Sequence[Group]) -> GroupSet:
    """Greedily drop the group overlapping the most others until memberships are disjoint.

    Ties go to the larger group, then to the lexicographically larger one.
    """
    remaining = sorted({tuple(sorted(g)) for g in groups})
    while True:
        overlaps = {g: sum(1 for h in remaining if h != g and set(g) & set(h)) for g in remaining}
        if not any(overlaps.values()):
            return GroupSet(tuple(remaining))
        worst = max(remaining, key=lambda g: (overlaps[g], len(g), g))
        remaining.remove(worst)


def find_groups(alloc: Allocation, max_size: Optional[int] = None) -> tuple[list[Group], GroupSet]:
    """Search and prune; groups with more than ``max_size`` members are discarded first."""
    found = find_all_groups(alloc)
    usable = [g for g in found if max_size is None or len(g) <= max_size]
    return found, prune_groups(usable)


def group_decoding_vectors(groupset: GroupSet, m: int) -> list[DecodingVector]:
    vectors = []
    for group in groupset:
        a = np.zeros(m)
        a[[w - 1 for w in group]] = 1.0
        vectors.append(DecodingVector(a))
    return vectors


def construct_group_b(support: SupportStructure, groupset: GroupSet, s: int, seed: int,
                      throughputs: Optional[Sequence[float]] = None) -> CodingStrategy:
    """Unit rows for group members; the remaining rows tolerate s - P stragglers on their own.

    If the non-group workers do not hold every partition exactly s + 1 - P times
    the plain heter-aware construction is returned instead, with a note.
    """
    P = len(groupset)
    if P > s:
        raise CodingError(f"{P} groups exceed the straggler budget s={s}")
    throughputs = tuple(throughputs) if throughputs is not None else None
    alloc = allocation_from_support(support)
    for g in groupset:
        if not is_exact_cover(g, alloc):
            raise CodingError(f"group {g} does not tile the partitions")
    members = sorted(groupset.members)
    if len(members) != sum(len(g) for g in groupset):
        raise CodingError("groups share members")

    residual_mask = np.array(support.mask)
    residual_mask[[w - 1 for w in members]] = False
    residual = SupportStructure(residual_mask)
    if any(n != s + 1 - P for n in residual.column_counts()):
        B, C = heter_aware_matrix(support, s, seed)
        return CodingStrategy(B, support, s, "heter_aware", tuple(support.row_counts()), C.seed,
                              throughputs, auxiliary=C.entries,
                              notes=("group residual replication check failed; heter-aware fallback",))

    B, C = heter_aware_matrix(residual, s - P, seed)
    B[[w - 1 for w in members]] = support.mask[[w - 1 for w in members]].astype(float)
    notes = () if P else ("no groups; equivalent to heter-aware",)
    return CodingStrategy(B, support, s, "group_based", tuple(support.row_counts()), C.seed,
                          throughputs, groups=groupset.groups, auxiliary=C.entries, notes=notes)
