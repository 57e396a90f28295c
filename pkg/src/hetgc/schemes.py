"""Strategy builders for the four schemes compared in experiments."""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .allocation import SupportStructure, allocate, cyclic_allocate, support_structure
from .coding import CodingError, CodingStrategy, SCHEMES, heter_aware_matrix
from .groups import GroupSet, construct_group_b, find_groups
from .profiles import ClusterConfig


def naive_strategy(config: ClusterConfig) -> CodingStrategy:
    """Data split evenly into m pieces, one per worker; decoding needs everyone."""
    m = config.m
    alloc = cyclic_allocate([1] * m, m)
    support = support_structure(alloc)
    return CodingStrategy(np.eye(m), support, 0, "naive", alloc.counts,
                          throughputs=tuple(config.throughputs), partition_size=config.k / m)


def cyclic_support(m: int, s: int) -> SupportStructure:
    """Cyclic repetition: worker i holds pieces i, i+1, ..., i+s (mod m)."""
    mask = np.zeros((m, m), dtype=bool)
    for i in range(m):
        mask[i, [(i + t) % m for t in range(s + 1)]] = True
    return SupportStructure(mask)


def cyclic_strategy(config: ClusterConfig, seed: int) -> CodingStrategy:
    """Uniform baseline: m equal pieces of data, s+1 consecutive pieces per worker."""
    m, s = config.m, config.s
    support = cyclic_support(m, s)
    B, C = heter_aware_matrix(support, s, seed)
    return CodingStrategy(B, support, s, "cyclic", tuple(support.row_counts()), C.seed,
                          tuple(config.throughputs), partition_size=config.k / m, auxiliary=C.entries)


def heter_aware_strategy(config: ClusterConfig, seed: int) -> CodingStrategy:
    support = support_structure(allocate(config))
    B, C = heter_aware_matrix(support, config.s, seed)
    return CodingStrategy(B, support, config.s, "heter_aware", tuple(support.row_counts()), C.seed,
                          tuple(config.throughputs), auxiliary=C.entries)


def group_based_strategy(config: ClusterConfig, seed: int) -> CodingStrategy:
    alloc = allocate(config)
    support = support_structure(alloc)
    _, groupset = find_groups(alloc, max_size=config.m - config.s)
    notes = ()
    if len(groupset) > config.s:
        # at most s+1 disjoint groups exist; keep the first s so the residual rows stay coded
        dropped = groupset.groups[config.s:]
        groupset = GroupSet(groupset.groups[:config.s])
        notes = (f"kept {config.s} of {config.s + len(dropped)} groups",)
    strategy = construct_group_b(support, groupset, config.s, seed, config.throughputs)
    if notes:
        strategy = replace(strategy, notes=strategy.notes + notes)
    return strategy


def build_strategy(config: ClusterConfig, scheme: str, seed: int) -> CodingStrategy:
    if scheme == "naive":
        if config.s > 0:
            raise CodingError("the naive scheme cannot tolerate stragglers (s must be 0)")
        return naive_strategy(config)
    if scheme == "cyclic":
        return cyclic_strategy(config, seed)
    if scheme == "heter_aware":
        return heter_aware_strategy(config, seed)
    if scheme == "group_based":
        return group_based_strategy(config, seed)
    raise CodingError(f"unknown scheme {scheme!r}; expected one of {', '.join(SCHEMES)}")
