from fractions import Fraction
from math import gcd

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from hetgc.allocation import (AllocationError, InfeasibleAllocation, allocation_from_support,
                              compute_partition_counts, cyclic_allocate, support_structure)
from hetgc.profiles import make_config

EXAMPLE1_MASK = np.array([
    [1, 0, 0, 0, 0, 0, 0],
    [0, 1, 1, 0, 0, 0, 0],
    [0, 0, 0, 1, 1, 1, 0],
    [1, 1, 1, 0, 0, 0, 1],
    [0, 0, 0, 1, 1, 1, 1],
], dtype=bool)


def test_counts_example1(example1):
    assert compute_partition_counts(example1) == [1, 2, 3, 4, 4]


def test_counts_largest_remainder_tie_to_lower_index():
    # 8/3 each: floors 2,2,2 and the two spare copies go to workers 1 and 2
    assert compute_partition_counts(make_config([1, 1, 1], 4, 1)) == [3, 3, 2]


def test_counts_equal_split():
    assert compute_partition_counts(make_config([5, 5], 3, 1)) == [3, 3]


def test_counts_capped_at_k():
    # shares 60/21 = 2.857, 2.857, 0.286: floors [2,2,0], spare copies go to the .857 remainders
    with pytest.warns(UserWarning):
        assert compute_partition_counts(make_config([10, 10, 1], 3, 1)) == [3, 3, 0]


def test_counts_cap_redistributes():
    counts = compute_partition_counts(make_config([100, 1, 1], 2, 1))
    assert counts == [2, 1, 1]


def test_counts_infeasible():
    # s < m already rules this out for configs, so hit the capacity check directly
    from hetgc.allocation import largest_remainder_counts
    with pytest.raises(InfeasibleAllocation):
        largest_remainder_counts([1, 1], 5, 2)


def test_idle_worker_warns():
    with pytest.warns(UserWarning, match="no partitions"):
        counts = compute_partition_counts(make_config([10, 10, 10, 0.1], 3, 1))
    assert counts == [2, 2, 2, 0]


def test_cyclic_example1():
    alloc = cyclic_allocate([1, 2, 3, 4, 4], 7)
    assert [set(a) for a in alloc.assignments] == [{1}, {2, 3}, {4, 5, 6}, {7, 1, 2, 3}, {4, 5, 6, 7}]


def test_cyclic_full_replication():
    alloc = cyclic_allocate([2, 2], 2)
    assert [set(a) for a in alloc.assignments] == [{1, 2}, {1, 2}]


def test_cyclic_hand_evaluated():
    # n' = 0, 3, 6 -> (1,2,3), (4,5 mod 4=1,6 mod 4=2), (7 mod 4=3, 8 mod 4=0->4)
    alloc = cyclic_allocate([3, 3, 2], 4)
    assert alloc.assignments == ((1, 2, 3), (4, 1, 2), (3, 4))


@pytest.mark.parametrize("counts,k", [([3, 1], 2), ([2, 1], 2), ([-1, 3], 2)])
def test_cyclic_precondition(counts, k):
    with pytest.raises(AllocationError):
        cyclic_allocate(counts, k)


def test_support_example1():
    support = support_structure(cyclic_allocate([1, 2, 3, 4, 4], 7), 5, 7)
    assert np.array_equal(support.mask, EXAMPLE1_MASK)


def test_support_zero_row():
    support = support_structure(cyclic_allocate([0, 2, 2], 2))
    assert not support.mask[0].any()


def test_support_full():
    assert support_structure(cyclic_allocate([2, 2], 2)).mask.all()


def test_support_round_trip():
    support = support_structure(cyclic_allocate([1, 2, 3, 4, 4], 7))
    assert support_structure(allocation_from_support(support)) == support


@st.composite
def configs(draw):
    m = draw(st.integers(2, 9))
    s = draw(st.integers(0, m - 1))
    k = draw(st.integers(1, 15))
    c = draw(st.lists(st.floats(0.05, 50.0), min_size=m, max_size=m))
    return make_config(c, k, s)


@settings(max_examples=200)
@given(configs())
def test_replication_invariant(config):
    with _quiet():
        counts = compute_partition_counts(config)
    assert sum(counts) == config.k * (config.s + 1)
    assert all(0 <= n <= config.k for n in counts)
    alloc = cyclic_allocate(counts, config.k)
    for parts, n in zip(alloc.assignments, counts):
        assert len(parts) == n == len(set(parts))
    support = support_structure(alloc)
    assert support.column_counts() == [config.s + 1] * config.k
    assert support.row_counts() == counts


@settings(max_examples=200)
@given(configs())
def test_counts_match_exact_shares(config):
    with _quiet():
        counts = compute_partition_counts(config)
    total = Fraction(config.k * (config.s + 1))
    csum = sum(Fraction(c) for c in config.throughputs)
    exact = [total * Fraction(c) / csum for c in config.throughputs]
    if all(x.denominator == 1 and x <= config.k for x in exact):
        assert counts == [int(x) for x in exact]
    elif all(x <= config.k for x in exact):
        # rounding moves every share by less than one copy
        assert all(abs(n - x) < 1 for n, x in zip(counts, exact))


@settings(max_examples=200)
@given(configs(), st.randoms(use_true_random=False))
def test_counts_permutation_equivariant(config, rnd):
    c = config.throughputs
    total = Fraction(config.k * (config.s + 1))
    csum = sum(Fraction(x) for x in c)
    exact = [total * Fraction(x) / csum for x in c]
    fracs = [x - int(x) for x in exact]
    assume(len(set(fracs)) == len(fracs))
    assume(all(x < config.k for x in exact))
    perm = list(range(config.m))
    rnd.shuffle(perm)
    with _quiet():
        base = compute_partition_counts(config)
        permuted = compute_partition_counts(make_config([c[p] for p in perm], config.k, config.s))
    assert permuted == [base[p] for p in perm]


@pytest.mark.parametrize("m,s", [(3, 0), (4, 1), (5, 2), (7, 3), (6, 5), (5, 1)])
def test_homogeneous_cyclic_placement(m, s):
    # equal throughputs, k = m: every worker holds s+1 consecutive partitions starting at i(s+1) mod m
    config = make_config([1.0] * m, m, s)
    support = support_structure(cyclic_allocate(compute_partition_counts(config), m))
    starts = []
    for i in range(m):
        start = (i * (s + 1)) % m
        assert set(np.flatnonzero(support.mask[i])) == {(start + t) % m for t in range(s + 1)}
        starts.append(start)
    if gcd(s + 1, m) == 1:
        # distinct starts: a row permutation of the classic cyclic repetition layout
        assert sorted(starts) == list(range(m))


def test_homogeneous_not_cyclic_when_replication_divides_m():
    # m=4, s=1: workers 1,3 and 2,4 hold identical pairs (fractional-repetition shape)
    support = support_structure(cyclic_allocate(compute_partition_counts(make_config([1.0] * 4, 4, 1)), 4))
    assert np.array_equal(support.mask[0], support.mask[2])
    assert np.array_equal(support.mask[1], support.mask[3])


def test_text_rendering():
    support = support_structure(cyclic_allocate([1, 2, 3, 4, 4], 7))
    assert support.to_text().splitlines()[3] == "* * * 0 0 0 *"


class _quiet:
    def __enter__(self):
        import warnings
        self._ctx = warnings.catch_warnings()
        self._ctx.__enter__()
        warnings.simplefilter("ignore")

    def __exit__(self, *exc):
        return self._ctx.__exit__(*exc)
