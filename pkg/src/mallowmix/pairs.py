"""Row indexing for ordered item pairs.

Items carry ids 1..Q.  Every matrix that is indexed by comparisons uses the
W = Q(Q-1) ordered pairs (i, j) with i != j, laid out lexicographically:
(1,2), (1,3), ..., (1,Q), (2,1), (2,3), ..., (Q,Q-1).
"""

from __future__ import annotations

import numpy as np


def num_pairs(Q: int) -> int:
    """Number of ordered pairs W = Q(Q-1)."""
    return Q * (Q - 1)


def num_unordered(Q: int) -> int:
    return Q * (Q - 1) // 2


def pair_row(i, j, Q: int):
    """Row index of ordered pair (i, j).  Accepts scalars or arrays."""
    i = np.asarray(i)
    j = np.asarray(j)
    row = (i - 1) * (Q - 1) + (j - 1) - (j > i)
    return int(row) if row.ndim == 0 else row.astype(np.int64)


def row_pair(row: int, Q: int) -> tuple[int, int]:
    """Ordered pair (i, j) stored at `row`."""
    i, rem = divmod(int(row), Q - 1)
    j = rem if rem < i else rem + 1
    return i + 1, j + 1


def pair_arrays(Q: int) -> tuple[np.ndarray, np.ndarray]:
    """Arrays (I, J) with the items of every row, in row order."""
    idx = np.arange(num_pairs(Q))
    i, rem = np.divmod(idx, Q - 1)
    j = np.where(rem < i, rem, rem + 1)
    return (i + 1).astype(np.int64), (j + 1).astype(np.int64)


def reverse_rows(Q: int) -> np.ndarray:
    """Permutation of row indices mapping row(i, j) to row(j, i)."""
    I, J = pair_arrays(Q)
    return pair_row(J, I, Q)


def unordered_arrays(Q: int) -> tuple[np.ndarray, np.ndarray]:
    """Arrays (I, J) with I < J listing the Q(Q-1)/2 unordered pairs."""
    I, J = pair_arrays(Q)
    keep = I < J
    return I[keep], J[keep]


def unordered_index(Q: int) -> np.ndarray:
    """Maps every ordered pair row to the index of its unordered pair."""
    I, J = pair_arrays(Q)
    forward = I < J
    out = np.empty(num_pairs(Q), dtype=np.int64)
    out[forward] = np.arange(num_unordered(Q))
    rev = reverse_rows(Q)
    out[~forward] = out[rev[~forward]]
    return out
