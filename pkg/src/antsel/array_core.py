"""Subarray bookkeeping for a switched uniform linear array.

A selection is an N-long 0/1 vector; the same selection is also stored as an
integer bit mask where bit ``i`` corresponds to antenna ``i`` (zero-based), so
the layout score used for alignment is simply the mask value.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class ArrayGeometry:
    """Full array: ``n_antennas`` elements spaced ``spacing`` half-wavelengths apart."""

    n_antennas: int = 21
    spacing: float = 0.5

    def __post_init__(self):
        if int(self.n_antennas) != self.n_antennas or self.n_antennas < 2:
            raise ValueError(f"n_antennas must be an integer >= 2, got {self.n_antennas!r}")
        if not self.spacing > 0 or not math.isfinite(self.spacing):
            raise ValueError(f"spacing must be positive, got {self.spacing!r}")

    @property
    def positions(self) -> np.ndarray:
        return np.arange(self.n_antennas) * float(self.spacing)


@dataclass(frozen=True, order=True)
class SelectionVector:
    """Binary antenna-selection vector.

    Ordering compares ``bits`` lexicographically, which is the tie-break order
    used by every selector.
    """

    bits: tuple[int, ...]
    popcount: int = field(init=False, compare=False)

    def __post_init__(self):
        bits = tuple(int(b) for b in self.bits)
        if not bits or any(b not in (0, 1) for b in bits):
            raise ValueError("bits must be a non-empty sequence of 0/1 values")
        object.__setattr__(self, "bits", bits)
        object.__setattr__(self, "popcount", sum(bits))

    @classmethod
    def from_indices(cls, indices: Iterable[int], n: int) -> "SelectionVector":
        bits = [0] * n
        for i in indices:
            if not 0 <= i < n:
                raise ValueError(f"antenna index {i} outside [0, {n})")
            bits[i] = 1
        return cls(tuple(bits))

    @classmethod
    def from_mask(cls, mask: int, n: int) -> "SelectionVector":
        return cls(tuple((int(mask) >> i) & 1 for i in range(n)))

    @classmethod
    def from_string(cls, text: str) -> "SelectionVector":
        return cls(tuple(int(c) for c in text.strip()))

    @property
    def n(self) -> int:
        return len(self.bits)

    @property
    def indices(self) -> tuple[int, ...]:
        return tuple(i for i, b in enumerate(self.bits) if b)

    @property
    def mask(self) -> int:
        return sum(1 << i for i, b in enumerate(self.bits) if b)

    def as_array(self) -> np.ndarray:
        return np.array(self.bits, dtype=np.int8)

    def __str__(self) -> str:
        return "".join(map(str, self.bits))


@dataclass(frozen=True)
class Subarray:
    """Sorted antenna positions in half-wavelength units."""

    positions: tuple[float, ...]

    def __post_init__(self):
        pos = tuple(float(p) for p in self.positions)
        if not pos:
            raise ValueError("a subarray needs at least one antenna")
        if any(b <= a for a, b in zip(pos, pos[1:])):
            raise ValueError("positions must be strictly increasing")
        object.__setattr__(self, "positions", pos)

    @property
    def size(self) -> int:
        return len(self.positions)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.positions, dtype=float)


@dataclass(frozen=True)
class UniqueSetStats:
    n_antennas: int
    n_select: int
    total_count: int
    unique_count: int
    ratio: float
    greedy_count: int
    switches_full: int
    switches_unique: int

    def csv_row(self) -> str:
        return (f"{self.n_antennas},{self.n_select},{self.total_count},{self.unique_count},"
                f"{self.ratio:.4f},{self.greedy_count},{self.switches_full},{self.switches_unique}")


STATS_HEADER = "N,M,F,F_unique,ratio,G,S,S_unique"


def greedy_evaluation_count(n: int, m: int) -> int:
    """Candidate evaluations made by the remove-one greedy search, (N+M+1)(N-M)/2."""
    return (n + m + 1) * (n - m) // 2


def _check_nm(n: int, m: int) -> None:
    if n < 1:
        raise ValueError(f"N must be positive, got {n}")
    if m < 1:
        raise ValueError(f"M must be at least 1, got {m}")
    if m > n:
        raise ValueError(f"M={m} exceeds N={n}")


def positions_from_selection(b: SelectionVector, g: ArrayGeometry) -> Subarray:
    if b.n != g.n_antennas:
        raise ValueError(f"selection has length {b.n}, geometry has {g.n_antennas} antennas")
    if b.popcount == 0:
        raise ValueError("all-zero selection has no positions")
    return Subarray(tuple(i * float(g.spacing) for i in b.indices))


def enumerate_subarrays(n: int, m: int) -> list[SelectionVector]:
    """All C(N, M) selections, ordered lexicographically by their index tuples."""
    _check_nm(n, m)
    return [SelectionVector.from_indices(c, n) for c in itertools.combinations(range(n), m)]


def score(b: SelectionVector) -> int:
    # antenna n (1-based) weighs 2**(n-1)
    return b.mask


def _shift_left(mask: int) -> int:
    return mask >> ((mask & -mask).bit_length() - 1)


def _reverse(mask: int, n: int) -> int:
    return int(format(mask, f"0{n}b")[::-1], 2)


def _align_mask(mask: int, n: int) -> int:
    shifted = _shift_left(mask)
    flipped = _shift_left(_reverse(mask, n))
    # lower score wins: keeps the mass center on the left
    return shifted if shifted <= flipped else flipped


def align_layout(b: SelectionVector) -> SelectionVector:
    """Canonical representative of ``b`` under translation and reflection."""
    if b.popcount == 0:
        raise ValueError("cannot align an all-zero selection")
    return SelectionVector.from_mask(_align_mask(b.mask, b.n), b.n)


def _combination_masks(n: int, m: int) -> np.ndarray:
    combos = np.fromiter(itertools.chain.from_iterable(itertools.combinations(range(n), m)),
                         dtype=np.int64, count=math.comb(n, m) * m).reshape(-1, m)
    return np.bitwise_or.reduce(np.left_shift(np.int64(1), combos), axis=1)


def _lowest_bit_index(masks: np.ndarray) -> np.ndarray:
    low = masks & -masks
    return np.log2(low.astype(np.float64)).round().astype(np.int64)


def align_masks(masks: np.ndarray, n: int) -> np.ndarray:
    """Vectorized :func:`align_layout` over integer masks."""
    masks = np.asarray(masks, dtype=np.int64)
    if np.any(masks <= 0):
        raise ValueError("cannot align an all-zero selection")
    shifted = masks >> _lowest_bit_index(masks)
    rev = np.zeros_like(masks)
    for i in range(n):
        rev |= ((masks >> i) & 1) << (n - 1 - i)
    flipped = rev >> _lowest_bit_index(rev)
    return np.where(shifted <= flipped, shifted, flipped)


def masks_to_bits(masks: np.ndarray, n: int) -> np.ndarray:
    masks = np.asarray(masks, dtype=np.int64)
    return ((masks[:, None] >> np.arange(n)) & 1).astype(np.int8)


def _sort_lexicographic(masks: np.ndarray, n: int) -> np.ndarray:
    bits = masks_to_bits(masks, n)
    # np.lexsort treats the last key as primary
    order = np.lexsort(bits.T[::-1])
    return masks[order]


def unique_masks(n: int, m: int) -> np.ndarray:
    """Aligned masks of the unique set, sorted lexicographically by bit vector."""
    _check_nm(n, m)
    aligned = np.unique(align_masks(_combination_masks(n, m), n))
    return _sort_lexicographic(aligned, n)


def switch_counts(unique: Sequence[SelectionVector], n: int, m: int) -> tuple[int, int]:
    """Switch count of the fully connected network and of the unique set.

    RFC ``r`` drives the ``r``-th selected antenna in position order, so the
    unique-set network needs one switch per distinct (RFC, antenna) pair.
    """
    pairs = {(r, i) for b in unique for r, i in enumerate(b.indices)}
    return m * n, len(pairs)


def _switches_from_masks(masks: np.ndarray, n: int) -> int:
    bits = masks_to_bits(masks, n)
    rfc = np.cumsum(bits, axis=1) - 1
    used = np.zeros((n, n), dtype=bool)
    rows, cols = np.nonzero(bits)
    used[rfc[rows, cols], cols] = True
    return int(used.sum())


def unique_subarray_set(n: int, m: int) -> tuple[list[SelectionVector], UniqueSetStats]:
    masks = unique_masks(n, m)
    unique = [SelectionVector.from_mask(int(k), n) for k in masks]
    total = math.comb(n, m)
    stats = UniqueSetStats(
        n_antennas=n,
        n_select=m,
        total_count=total,
        unique_count=len(unique),
        ratio=len(unique) / total,
        greedy_count=greedy_evaluation_count(n, m),
        switches_full=m * n,
        switches_unique=_switches_from_masks(masks, n),
    )
    return unique, stats


def unique_set_stats(n: int, m: int) -> UniqueSetStats:
    """Table-I style statistics without materializing SelectionVector objects."""
    masks = unique_masks(n, m)
    total = math.comb(n, m)
    return UniqueSetStats(n, m, total, len(masks), len(masks) / total,
                          greedy_evaluation_count(n, m), m * n, _switches_from_masks(masks, n))
