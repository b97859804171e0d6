"""Rankings over items 1..Q: positions, Kendall tau, Copeland aggregation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from . import pairs


@dataclass(frozen=True)
class Permutation:
    """A ranking of items 1..Q.

    ``positions[item - 1]`` is the rank position of ``item``; position 1 is
    the most preferred.  The inverse view ``ranking`` lists the items from
    most to least preferred.
    """

    positions: tuple[int, ...]

    def __post_init__(self):
        Q = len(self.positions)
        if Q == 0:
            raise ValueError("empty permutation")
        if sorted(self.positions) != list(range(1, Q + 1)):
            raise ValueError(f"positions are not a bijection onto 1..{Q}: {self.positions}")

    @classmethod
    def from_ranking(cls, ranking: Iterable[int]) -> "Permutation":
        """Build from a list of items ordered most to least preferred."""
        ranking = list(ranking)
        Q = len(ranking)
        if sorted(ranking) != list(range(1, Q + 1)):
            raise ValueError(f"ranking is not a reordering of 1..{Q}: {ranking}")
        pos = [0] * Q
        for p, item in enumerate(ranking, start=1):
            pos[item - 1] = p
        return cls(tuple(pos))

    @classmethod
    def identity(cls, Q: int) -> "Permutation":
        return cls(tuple(range(1, Q + 1)))

    def __len__(self) -> int:
        return len(self.positions)

    @property
    def ranking(self) -> tuple[int, ...]:
        """Items ordered from most to least preferred."""
        out = [0] * len(self.positions)
        for item, p in enumerate(self.positions, start=1):
            out[p - 1] = item
        return tuple(out)

    def position_of(self, item: int) -> int:
        return self.positions[item - 1]

    def item_at(self, position: int) -> int:
        return self.ranking[position - 1]


def _count_inversions(seq: list[int]) -> int:
    """Inversion count by merge sort, O(n log n)."""
    n = len(seq)
    if n < 2:
        return 0
    buf = list(seq)
    tmp = [0] * n

    def rec(lo: int, hi: int) -> int:
        if hi - lo < 2:
            return 0
        mid = (lo + hi) // 2
        count = rec(lo, mid) + rec(mid, hi)
        a, b, out = lo, mid, lo
        while a < mid and b < hi:
            if buf[a] <= buf[b]:
                tmp[out] = buf[a]
                a += 1
            else:
                tmp[out] = buf[b]
                count += mid - a
                b += 1
            out += 1
        while a < mid:
            tmp[out] = buf[a]
            a += 1
            out += 1
        while b < hi:
            tmp[out] = buf[b]
            b += 1
            out += 1
        buf[lo:hi] = tmp[lo:hi]
        return count

    return rec(0, n)


def kendall_tau(a: Permutation, b: Permutation) -> int:
    """Number of item pairs ordered differently by ``a`` and ``b``."""
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")
    # Walk the items in a's preference order and count inversions of their
    # positions under b.
    seq = [b.positions[item - 1] for item in a.ranking]
    return _count_inversions(seq)


def copeland_rank(wins, Q: int, *, partial: bool = False) -> Permutation:
    """Aggregate a pairwise win relation into a ranking by win counts.

    Parameters
    ----------
    wins : boolean array of shape (W,) over ordered pair rows, or an
        iterable of ``(winner, loser)`` tuples.
    Q : number of items.
    partial : when False, every unordered pair must be decided in exactly
        one direction.  When True, undecided pairs are skipped and only the
        decided ones count.  Both directions marked at once is always an
        error.

    Ties in win counts are broken toward the smaller item id.
    """
    W = pairs.num_pairs(Q)
    if isinstance(wins, np.ndarray) and wins.dtype != object:
        rel = wins.astype(bool)
        if rel.shape != (W,):
            raise ValueError(f"win relation must have shape ({W},), got {rel.shape}")
    else:
        rel = np.zeros(W, dtype=bool)
        for winner, loser in wins:
            rel[pairs.pair_row(winner, loser, Q)] = True

    rev = pairs.reverse_rows(Q)
    both = rel & rel[rev]
    if both.any():
        i, j = pairs.row_pair(int(np.flatnonzero(both)[0]), Q)
        raise ValueError(f"pair ({i}, {j}) is marked as a win in both directions")
    if not partial:
        neither = ~rel & ~rel[rev]
        if neither.any():
            i, j = pairs.row_pair(int(np.flatnonzero(neither)[0]), Q)
            raise ValueError(f"pair ({i}, {j}) is decided in neither direction")

    I, _ = pairs.pair_arrays(Q)
    counts = np.bincount(I[rel] - 1, minlength=Q)
    order = sorted(range(1, Q + 1), key=lambda item: (-counts[item - 1], item))
    return Permutation.from_ranking(order)
