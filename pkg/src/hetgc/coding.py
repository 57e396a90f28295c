"""Coding matrices: random auxiliary matrix, column-wise construction of B, robustness checks.

Worker ids are 1-based in every public argument and return value; rows of
``CodingStrategy.matrix`` are 0-based as usual for numpy.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations
from math import comb, sqrt
from typing import Iterable, Optional, Sequence

import numpy as np

from .allocation import SupportStructure

ZERO_TOL = 1e-12
COND_LIMIT = 1e8
MAX_RETRIES = 16
EXHAUSTIVE_MAX_M = 20
MAX_PATTERNS = 250_000
# distance of sum(lambda)/||lambda|| from zero accepted by verify_p2
P2_TOL = 1e-8

SCHEMES = ("naive", "cyclic", "heter_aware", "group_based")


class CodingError(RuntimeError):
    pass


class SingularSubmatrix(CodingError):
    """A square block of the auxiliary matrix is singular or badly conditioned."""


class CombinatorialGuard(CodingError):
    """Exhaustive enumeration requested beyond the supported size."""


def residual_tol(k: int) -> float:
    return 1e-8 * sqrt(k)


@dataclass(frozen=True)
class AuxiliaryMatrix:
    entries: np.ndarray  # (s+1, m)
    seed: int

    @property
    def s(self) -> int:
        return self.entries.shape[0] - 1

    @property
    def m(self) -> int:
        return self.entries.shape[1]


@dataclass(frozen=True)
class DecodingVector:
    coefficients: np.ndarray  # length m, zero outside the responding workers

    @property
    def support(self) -> frozenset[int]:
        return frozenset(int(i) + 1 for i in np.flatnonzero(self.coefficients))

    def residual(self, matrix: np.ndarray) -> float:
        return float(np.linalg.norm(self.coefficients @ matrix - 1.0))


@dataclass(frozen=True)
class CodingStrategy:
    matrix: np.ndarray  # (m, k)
    support: SupportStructure
    s: int
    scheme: str
    counts: tuple[int, ...]
    seed: Optional[int] = None
    throughputs: Optional[tuple[float, ...]] = None
    # data units per partition; the cyclic and naive baselines split the data into m pieces
    partition_size: float = 1.0
    groups: tuple[tuple[int, ...], ...] = ()
    auxiliary: Optional[np.ndarray] = None
    notes: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        matrix = np.array(self.matrix, dtype=float)
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)
        if self.auxiliary is not None:
            aux = np.array(self.auxiliary, dtype=float)
            aux.setflags(write=False)
            object.__setattr__(self, "auxiliary", aux)
        if self.scheme not in SCHEMES:
            raise CodingError(f"unknown scheme {self.scheme!r}")
        if matrix.shape != self.support.mask.shape:
            raise CodingError("matrix and support shapes differ")
        if not np.array_equal(np.abs(matrix) > ZERO_TOL, self.support.mask):
            raise CodingError("nonzero pattern of B does not match its support")

    @property
    def m(self) -> int:
        return self.matrix.shape[0]

    @property
    def k(self) -> int:
        return self.matrix.shape[1]

    def loads(self) -> list[int]:
        """||b_i||_0 per worker."""
        return self.support.row_counts()

    def compute_times(self, throughputs: Optional[Sequence[float]] = None) -> list[float]:
        c = throughputs if throughputs is not None else self.throughputs
        if c is None:
            raise CodingError("throughputs are required to compute worker times")
        return [n * self.partition_size / ci for n, ci in zip(self.loads(), c)]


def _well_conditioned(block: np.ndarray) -> bool:
    sv = np.linalg.svd(block, compute_uv=False)
    return bool(sv[-1] > 0 and sv[0] / sv[-1] < COND_LIMIT)


def _draw(s: int, m: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.uniform(0.0, 1.0, size=(s + 1, m))


def generate_auxiliary(s: int, m: int, seed: int,
                       columns: Optional[Iterable[Sequence[int]]] = None) -> AuxiliaryMatrix:
    """Uniform(0,1) (s+1)-by-m matrix from a seeded generator.

    ``columns`` lists the 0-based column sets whose square blocks will be inverted;
    when omitted, every (s+1)-subset is checked if there are few enough of them.
    A draw with a badly conditioned block is replaced by the draw for seed+1.
    """
    if not 0 <= s < m:
        raise ValueError(f"need 0 <= s < m, got s={s}, m={m}")
    if columns is not None:
        blocks = sorted({tuple(sorted(c)) for c in columns})
    elif comb(m, s + 1) <= 20_000:
        blocks = list(combinations(range(m), s + 1))
    else:
        blocks = []
    for attempt in range(MAX_RETRIES + 1):
        entries = _draw(s, m, seed + attempt)
        if np.all(entries > 0) and all(_well_conditioned(entries[:, list(b)]) for b in blocks):
            return AuxiliaryMatrix(entries, seed + attempt)
    raise SingularSubmatrix(f"no well-conditioned auxiliary matrix after {MAX_RETRIES} retries from seed {seed}")


def _entries(C) -> np.ndarray:
    return C.entries if isinstance(C, AuxiliaryMatrix) else np.asarray(C, dtype=float)


def verify_p1(C) -> bool:
    """Every (s+1)-column block of C is nonsingular (condition number below COND_LIMIT)."""
    entries = _entries(C)
    rows, m = entries.shape
    if m > EXHAUSTIVE_MAX_M:
        raise CombinatorialGuard(f"verify_p1 supports m <= {EXHAUSTIVE_MAX_M}")
    return all(_well_conditioned(entries[:, list(cols)]) for cols in combinations(range(m), rows))


def _p2_block_ok(block: np.ndarray) -> bool:
    # block is (s+1, s); its left null space must be a line whose direction has nonzero coordinate sum
    rows, cols = block.shape
    if cols == 0:
        return True
    _, sv, vt = np.linalg.svd(block.T)
    if sv[-1] <= sv[0] / COND_LIMIT:
        return False  # null space has dimension >= 2 and meets the zero-sum hyperplane
    lam = vt[-1]
    return bool(abs(lam.sum()) / np.linalg.norm(lam) > P2_TOL)


def verify_p2(C) -> bool:
    """For every s-column block C', each nonzero lambda with lambda C' = 0 has sum(lambda) != 0."""
    entries = _entries(C)
    rows, m = entries.shape
    if m > EXHAUSTIVE_MAX_M:
        raise CombinatorialGuard(f"verify_p2 supports m <= {EXHAUSTIVE_MAX_M}")
    return all(_p2_block_ok(entries[:, list(cols)]) for cols in combinations(range(m), rows - 1))


def solve_columns(support: SupportStructure, C) -> np.ndarray:
    """Solve C_j d = 1 for each partition column j and embed d at the support positions.

    Returns the (m, k) matrix; C has s+1 rows and every support column must hold
    exactly s+1 workers.
    """
    entries = _entries(C)
    rows = entries.shape[0]
    if entries.shape[1] != support.m:
        raise CodingError("auxiliary matrix width must equal the number of workers")
    B = np.zeros(support.mask.shape)
    ones = np.ones(rows)
    for j in range(support.k):
        holders = support.workers_of(j)
        if len(holders) != rows:
            raise CodingError(f"partition {j + 1} is held by {len(holders)} workers, expected {rows}")
        block = entries[:, holders]
        if not _well_conditioned(block):
            raise SingularSubmatrix(f"auxiliary block for partition {j + 1} is singular or ill-conditioned")
        d = np.linalg.solve(block, ones)
        if np.any(np.abs(d) <= ZERO_TOL):
            raise SingularSubmatrix(f"coefficient for partition {j + 1} vanished")
        B[holders, j] = d
    return B


def construct_b(support: SupportStructure, C: AuxiliaryMatrix, throughputs=None) -> CodingStrategy:
    """Heter-aware strategy over ``support`` generated by auxiliary matrix ``C``."""
    matrix = solve_columns(support, C)
    return CodingStrategy(
        matrix=matrix,
        support=support,
        s=C.s,
        scheme="heter_aware",
        counts=tuple(support.row_counts()),
        seed=C.seed,
        throughputs=tuple(throughputs) if throughputs is not None else None,
        auxiliary=C.entries,
    )


def support_columns(support: SupportStructure) -> list[tuple[int, ...]]:
    return [tuple(support.workers_of(j)) for j in range(support.k)]


def heter_aware_matrix(support: SupportStructure, s: int, seed: int) -> tuple[np.ndarray, AuxiliaryMatrix]:
    """Draw C (retrying on bad conditioning) and solve B over ``support``."""
    next_seed = seed
    for _ in range(MAX_RETRIES + 1):
        C = generate_auxiliary(s, support.m, next_seed, columns=support_columns(support))
        try:
            return solve_columns(support, C), C
        except SingularSubmatrix:
            next_seed = C.seed + 1
    raise SingularSubmatrix(f"could not construct B from seed {seed}")


def span_solve(matrix: np.ndarray, workers: Iterable[int]) -> Optional[DecodingVector]:
    """Least-squares a with a.B = 1 using only the given (1-based) worker rows.

    Returns None when the all-ones row is not in their span.
    """
    m, k = matrix.shape
    rows = sorted({int(w) - 1 for w in workers})
    if not rows:
        return None
    sub = matrix[rows]
    if not np.all(np.any(sub != 0, axis=0)):
        return None  # some partition is not covered at all
    sol, *_ = np.linalg.lstsq(sub.T, np.ones(k), rcond=None)
    coefficients = np.zeros(m)
    coefficients[rows] = sol
    coefficients[np.abs(coefficients) <= ZERO_TOL] = 0.0
    vec = DecodingVector(coefficients)
    if vec.residual(matrix) > residual_tol(k):
        return None
    return vec


def _patterns(m: int, s: int):
    if m > EXHAUSTIVE_MAX_M or comb(m, s) > MAX_PATTERNS:
        raise CombinatorialGuard(f"exhaustive check limited to m <= {EXHAUSTIVE_MAX_M} and {MAX_PATTERNS} patterns")
    return combinations(range(1, m + 1), s)


def verify_condition1(strategy: CodingStrategy, s: Optional[int] = None) -> bool:
    """True iff every set of m-s surviving workers can rebuild the all-ones row."""
    s = strategy.s if s is None else s
    everyone = set(range(1, strategy.m + 1))
    return all(span_solve(strategy.matrix, everyone - set(S)) is not None for S in _patterns(strategy.m, s))


def build_decoding_table(strategy: CodingStrategy) -> list[tuple[tuple[int, ...], DecodingVector]]:
    """One decoding vector per straggler set of size s, in lexicographic order."""
    everyone = set(range(1, strategy.m + 1))
    table = []
    for S in _patterns(strategy.m, strategy.s):
        vec = span_solve(strategy.matrix, everyone - set(S))
        if vec is None:
            raise CodingError(f"straggler pattern {S} is undecodable; "
                              f"strategy is not robust to {strategy.s} stragglers")
        table.append((S, vec))
    return table


def auxiliary_residual(strategy: CodingStrategy) -> Optional[float]:
    """max |C B' - 1| where B' is B without the group rows; None if C is unknown."""
    if strategy.auxiliary is None:
        return None
    B = np.array(strategy.matrix)
    for group in strategy.groups:
        B[[w - 1 for w in group]] = 0.0
    return float(np.max(np.abs(strategy.auxiliary @ B - 1.0)))


# strategy file

FORMAT_VERSION = 1


def strategy_to_dict(strategy: CodingStrategy) -> dict:
    doc = {
        "format": FORMAT_VERSION,
        "scheme": strategy.scheme,
        "m": strategy.m,
        "k": strategy.k,
        "s": strategy.s,
        "counts": list(strategy.counts),
        "support": [[bool(x) for x in row] for row in strategy.support.mask],
        "B": [[float(x) for x in row] for row in strategy.matrix],
        "seed": strategy.seed,
        "partition_size": strategy.partition_size,
        "groups": [list(g) for g in strategy.groups],
    }
    if strategy.throughputs is not None:
        doc["throughputs"] = [float(c) for c in strategy.throughputs]
    if strategy.auxiliary is not None:
        doc["auxiliary"] = [[float(x) for x in row] for row in strategy.auxiliary]
    if strategy.notes:
        doc["notes"] = list(strategy.notes)
    return doc


def strategy_from_dict(doc: dict) -> CodingStrategy:
    try:
        support = SupportStructure(np.array(doc["support"], dtype=bool).reshape(doc["m"], doc["k"]))
        matrix = np.array(doc["B"], dtype=float).reshape(doc["m"], doc["k"])
        throughputs = doc.get("throughputs")
        return CodingStrategy(
            matrix=matrix,
            support=support,
            s=int(doc["s"]),
            scheme=doc["scheme"],
            counts=tuple(int(n) for n in doc["counts"]),
            seed=doc.get("seed"),
            throughputs=tuple(float(c) for c in throughputs) if throughputs is not None else None,
            partition_size=float(doc.get("partition_size", 1.0)),
            groups=tuple(tuple(int(w) for w in g) for g in doc.get("groups", [])),
            auxiliary=np.array(doc["auxiliary"], dtype=float) if "auxiliary" in doc else None,
            notes=tuple(doc.get("notes", [])),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CodingError(f"malformed strategy document: {exc}") from None


def dump_strategy(strategy: CodingStrategy) -> str:
    return json.dumps(strategy_to_dict(strategy), indent=1) + "\n"


def load_strategy(text: str) -> CodingStrategy:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CodingError(f"parse error: {exc}") from None
    return strategy_from_dict(doc)
