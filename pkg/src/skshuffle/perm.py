"""
Permutations of a deck, block updates, height functions and projections.

Indexing convention (used everywhere in this package): positions and labels
are 1-based in the public API and in every file format. Internally a
``Permutation`` stores a read-only int64 array ``entries`` with
``entries[p - 1] == sigma(p)``, i.e. the label of the card at position ``p``.

Heights are exact. ``N * h_sigma(x, y)`` is an integer, so the integer
numerators are what gets compared; ``Fraction`` is used at the API boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "Permutation",
    "ExclusionConfig",
    "SkeletonData",
    "identity",
    "reversal",
    "apply_block",
    "apply_block_array",
    "height",
    "height_numerators",
    "height_profile",
    "count_matrix",
    "dominates",
    "exclusion_project",
    "anchors",
    "semi_skeleton",
    "skeleton",
    "within_block_randomize",
    "uniform_perm",
]


class Permutation:
    """An element of S_N stored as the label sequence sigma(1), ..., sigma(N)."""

    __slots__ = ("_entries", "_key")

    def __init__(self, entries: Iterable[int]):
        arr = np.array(list(entries) if not isinstance(entries, np.ndarray) else entries,
                       dtype=np.int64).copy()
        n = arr.shape[0]
        if arr.ndim != 1 or n < 1:
            raise ValueError("a permutation needs a nonempty 1-d label sequence")
        seen = np.zeros(n + 1, dtype=bool)
        if arr.min() < 1 or arr.max() > n:
            raise ValueError(f"labels must lie in 1..{n}")
        seen[arr] = True
        if not seen[1:].all():
            raise ValueError("labels must form a bijection on 1..N")
        arr.setflags(write=False)
        self._entries = arr
        self._key = None

    @classmethod
    def _trusted(cls, arr: np.ndarray) -> "Permutation":
        # skips validation; callers guarantee a bijection
        obj = cls.__new__(cls)
        arr = np.asarray(arr, dtype=np.int64).copy()
        arr.setflags(write=False)
        obj._entries = arr
        obj._key = None
        return obj

    @property
    def entries(self) -> np.ndarray:
        return self._entries

    @property
    def N(self) -> int:
        return int(self._entries.shape[0])

    def __len__(self) -> int:
        return self.N

    def __call__(self, position: int) -> int:
        """Label of the card at 1-based ``position``."""
        return int(self._entries[position - 1])

    def positions(self) -> np.ndarray:
        """Inverse map: ``positions()[label - 1]`` is the 1-based position of ``label``."""
        inv = np.empty_like(self._entries)
        inv[self._entries - 1] = np.arange(1, self.N + 1)
        return inv

    def as_tuple(self) -> tuple:
        if self._key is None:
            self._key = tuple(int(v) for v in self._entries)
        return self._key

    def __eq__(self, other) -> bool:
        if not isinstance(other, Permutation):
            return NotImplemented
        return self.as_tuple() == other.as_tuple()

    def __hash__(self) -> int:
        return hash(self.as_tuple())

    def __repr__(self) -> str:
        return f"Permutation({self.to_string()})"

    def to_string(self) -> str:
        return ",".join(str(v) for v in self.as_tuple())

    @classmethod
    def from_string(cls, text: str) -> "Permutation":
        return cls(int(tok) for tok in text.strip().split(","))


def identity(n: int) -> Permutation:
    return Permutation._trusted(np.arange(1, n + 1))


def reversal(n: int) -> Permutation:
    return Permutation._trusted(np.arange(n, 0, -1))


def apply_block_array(arr: np.ndarray, block: np.ndarray, i: int, j: int) -> np.ndarray:
    """Rearrange the window [i, j] of ``arr`` (last axis) by ``block``.

    Works on any array whose last axis is indexed by position (labels, 0/1
    occupation bits, batches of either). Output position m in [i, j] receives
    the entry at position ``block(m + 1 - i) + i - 1``.
    """
    out = np.array(arr, copy=True)
    src = np.asarray(block, dtype=np.int64) + (i - 2)
    out[..., i - 1:j] = arr[..., src]
    return out


def apply_block(eta: Permutation, block: Permutation, i: int, j: int) -> Permutation:
    N = eta.N
    if not (1 <= i < j <= N):
        raise ValueError(f"interval [{i}, {j}] is not inside [1, {N}] with i < j")
    if block.N != j - i + 1:
        raise ValueError(f"block permutation has size {block.N}, window has {j - i + 1}")
    return Permutation._trusted(apply_block_array(eta.entries, block.entries, i, j))


def count_matrix(sigma: Permutation) -> np.ndarray:
    """C[x, y] = #{z <= x : sigma(z) <= y} for 0 <= x, y <= N (integer array)."""
    N = sigma.N
    ind = np.zeros((N + 1, N + 1), dtype=np.int64)
    ind[np.arange(1, N + 1), sigma.entries] = 1
    return ind.cumsum(axis=0).cumsum(axis=1)


def height_numerators(sigma: Permutation, y: int) -> np.ndarray:
    """Integers N * h_sigma(x, y) for x = 0..N."""
    N = sigma.N
    small = np.concatenate(([0], (sigma.entries <= y).astype(np.int64)))
    return N * np.cumsum(small) - np.arange(N + 1) * y


def height(sigma: Permutation, x: int, y: int) -> Fraction:
    N = sigma.N
    if not (0 <= x <= N and 0 <= y <= N):
        raise ValueError(f"need 0 <= x, y <= {N}")
    count = int(np.count_nonzero(sigma.entries[:x] <= y))
    return Fraction(N * count - x * y, N)


def height_profile(sigma: Permutation, y: int | None = None) -> np.ndarray:
    """Heights h_sigma(x, y) for x = 1..N-1 as floats (default y = floor(N/2))."""
    N = sigma.N
    if y is None:
        y = N // 2
    return height_numerators(sigma, y)[1:N] / N


def dominates(sigma: Permutation, other: Permutation) -> bool:
    """True iff h_sigma(x, y) >= h_other(x, y) for every x, y."""
    if sigma.N != other.N:
        raise ValueError("permutations of different sizes are not comparable")
    # centering terms cancel, so the count matrices decide
    return bool(np.all(count_matrix(sigma) >= count_matrix(other)))


@dataclass(frozen=True)
class ExclusionConfig:
    bits: tuple
    ones_count: int

    def __post_init__(self):
        n = len(self.bits)
        if sum(self.bits) != self.ones_count:
            raise ValueError("ones_count does not match the bits")
        if not (1 <= self.ones_count <= n - 1):
            raise ValueError("need 1 <= K <= N - 1")

    def as_array(self) -> np.ndarray:
        return np.array(self.bits, dtype=np.int8)


def exclusion_project(sigma: Permutation, K: int) -> ExclusionConfig:
    if not (1 <= K <= sigma.N - 1):
        raise ValueError(f"K must lie in [1, {sigma.N - 1}]")
    bits = tuple(int(b) for b in (sigma.entries <= K))
    return ExclusionConfig(bits, K)


def anchors(N: int, K: int) -> list[int]:
    """x_i = ceil(i N / K) for i = 0..K."""
    return [-(-i * N // K) for i in range(K + 1)]


@dataclass(frozen=True)
class SkeletonData:
    """Heights recorded at anchor thresholds.

    ``numerators`` holds N * h, so values are ``numerators / N`` exactly. For
    the semi-skeleton the rows are x = 1..N; for the skeleton they are the
    anchors x_1..x_K. Columns are the thresholds x_1..x_K.
    """

    block_count: int
    anchors: tuple
    numerators: np.ndarray
    N: int

    @property
    def values(self) -> np.ndarray:
        return self.numerators / self.N

    def value(self, row: int, col: int) -> Fraction:
        """Exact entry at 1-based (row, col)."""
        return Fraction(int(self.numerators[row - 1, col - 1]), self.N)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SkeletonData):
            return NotImplemented
        return (self.N == other.N and self.anchors == other.anchors
                and np.array_equal(self.numerators, other.numerators))


def _check_K(N: int, K: int, low: int = 2):
    if not (low <= K <= N):
        raise ValueError(f"K must lie in [{low}, {N}]")


def semi_skeleton(sigma: Permutation, K: int) -> SkeletonData:
    N = sigma.N
    _check_K(N, K)
    xs = anchors(N, K)
    C = count_matrix(sigma)
    cols = np.array(xs[1:])
    rows = np.arange(1, N + 1)
    num = N * C[1:, cols] - np.outer(rows, cols)
    return SkeletonData(K, tuple(xs), num, N)


def skeleton(sigma: Permutation, K: int) -> SkeletonData:
    N = sigma.N
    _check_K(N, K)
    xs = anchors(N, K)
    C = count_matrix(sigma)
    a = np.array(xs[1:])
    num = N * C[np.ix_(a, a)] - np.outer(a, a)
    return SkeletonData(K, tuple(xs), num, N)


def within_block_randomize(sigma: Permutation, K: int, rng: np.random.Generator) -> Permutation:
    """Relabel cards uniformly within each label block (x_{i-1}, x_i]."""
    N = sigma.N
    _check_K(N, K, low=1)
    xs = anchors(N, K)
    relabel = np.arange(N + 1, dtype=np.int64)
    for lo, hi in zip(xs[:-1], xs[1:]):
        relabel[lo + 1:hi + 1] = rng.permutation(np.arange(lo + 1, hi + 1))
    return Permutation._trusted(relabel[sigma.entries])


def uniform_perm(rng: np.random.Generator, n: int) -> Permutation:
    if n < 1:
        raise ValueError("n must be positive")
    return Permutation._trusted(rng.permutation(n) + 1)
