"""Encoding partial gradients on workers and decoding the total from whoever responded."""

from __future__ import annotations

from typing import Iterable, Mapping, NamedTuple, Optional, Sequence

import numpy as np

from .coding import CodingStrategy, DecodingVector, ZERO_TOL, span_solve


class DecodeError(ValueError):
    pass


def synthetic_partial(seed: int, round_index: int, partition: int, dim: int) -> np.ndarray:
    """Deterministic stand-in for the partial gradient of one partition in one round."""
    return np.random.default_rng([seed, round_index, partition]).standard_normal(dim)


def synthetic_partials(seed: int, round_index: int, partitions: Iterable[int], dim: int) -> dict[int, np.ndarray]:
    return {j: synthetic_partial(seed, round_index, j, dim) for j in partitions}


def encode_local(row: Sequence[float], partials: Mapping[int, np.ndarray], dim: Optional[int] = None) -> np.ndarray:
    """sum_j row[j] * g_j over the nonzero entries of ``row`` (partitions are 1-based keys)."""
    row = np.asarray(row, dtype=float)
    support = [j + 1 for j in np.flatnonzero(np.abs(row) > ZERO_TOL)]
    missing = [j for j in support if j not in partials]
    if missing:
        raise DecodeError(f"missing partial gradients for partitions {missing}")
    if not support:
        if dim is None:
            raise DecodeError("empty row needs an explicit dimension")
        return np.zeros(dim)
    total = row[support[0] - 1] * np.asarray(partials[support[0]], dtype=float)
    for j in support[1:]:
        total = total + row[j - 1] * np.asarray(partials[j], dtype=float)
    return total


def solve_decoding_vector(strategy: CodingStrategy, active: Iterable[int]) -> Optional[DecodingVector]:
    """Decoding vector using only ``active`` workers, or None if they cannot recover the sum.

    A fully responded group is used directly (unit weights, exact); otherwise the
    least-squares solution over the active rows.
    """
    active = set(active)
    if not active:
        raise DecodeError("active set is empty")
    for group in strategy.groups:
        if active.issuperset(group):
            a = np.zeros(strategy.m)
            a[[w - 1 for w in group]] = 1.0
            return DecodingVector(a)
    return span_solve(strategy.matrix, active)


class EarliestDecode(NamedTuple):
    position: int  # j*, 1-based position in finishing order
    worker: int    # id of the worker finishing at position j*
    time: float    # T(B, S) = t_{j*}
    vector: DecodingVector


def finishing_order(times: Sequence[float]) -> list[int]:
    """Worker ids sorted by finishing time, ties by id."""
    return sorted(range(1, len(times) + 1), key=lambda w: (times[w - 1], w))


def earliest_decodable(strategy: CodingStrategy, throughputs: Sequence[float],
                       stragglers: Iterable[int] = ()) -> Optional[EarliestDecode]:
    """Smallest finishing-order prefix whose non-straggler members can decode.

    Returns None if even all non-stragglers together cannot decode.
    """
    times = strategy.compute_times(throughputs)
    stragglers = set(stragglers)
    order = finishing_order(times)
    active: set[int] = set()
    for j, w in enumerate(order, start=1):
        if w in stragglers:
            continue
        active.add(w)
        vec = solve_decoding_vector(strategy, active)
        if vec is not None:
            return EarliestDecode(j, w, times[w - 1], vec)
    return None


def recover_gradient(coded: Mapping[int, np.ndarray], a: DecodingVector) -> np.ndarray:
    """sum_j a_j * coded[j] over the support of ``a``, in worker-id order."""
    workers = sorted(a.support)
    missing = [w for w in workers if w not in coded]
    if missing:
        raise DecodeError(f"missing coded gradients from workers {missing}")
    if not workers:
        raise DecodeError("decoding vector is all zeros")
    total = a.coefficients[workers[0] - 1] * np.asarray(coded[workers[0]], dtype=float)
    for w in workers[1:]:
        total = total + a.coefficients[w - 1] * np.asarray(coded[w], dtype=float)
    return total
