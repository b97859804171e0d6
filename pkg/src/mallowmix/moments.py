"""Split-half co-occurrence statistics of a comparison corpus.

Each user's records are split into two halves by arrival order.  Both
halves become pair-by-user count matrices whose rows are normalized to sum
to one; the scaled cross product of the halves converges, as the number of
users grows, to a matrix determined only by the observation matrix B and
the first two moments of the weight prior.  Splitting removes the
within-user sampling noise that would otherwise contaminate the diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import pairs
from .generator import ComparisonCorpus, MixedMembershipModel

# E-hat is stored dense up to this many pair rows, sparse beyond.
DENSE_ROW_LIMIT = 2000


class SplitError(ValueError):
    """A user has too few comparisons to split."""


@dataclass
class SplitCounts:
    """Per-half pair-by-user count matrices (W x M, CSR)."""

    X: sp.csr_matrix
    X_prime: sp.csr_matrix
    M: int
    Q: int

    def row_totals(self) -> np.ndarray:
        """Combined count of each ordered pair across all users."""
        return np.asarray((self.X + self.X_prime).sum(axis=1)).ravel()

    def row_scale(self) -> np.ndarray:
        """Average per-user count of each ordered pair, (1/M) X 1 with X the
        combined counts; used to scale regression solutions."""
        return self.row_totals() / self.M


@dataclass
class CoocMatrix:
    """Estimated co-occurrence matrix with bookkeeping.

    ``M`` is the number of users behind the estimate; 0 marks an analytic
    (asymptotic) matrix.  Rows and columns outside ``active`` are zero.
    ``row_counts`` carries the combined observation count of each pair row
    (None for analytic matrices), letting downstream consumers judge how
    trustworthy each row of the estimate is.  ``split`` keeps the
    per-user half counts the estimate was built from, so detection can
    judge the sampling noise of row differences; None for analytic
    matrices.
    """

    E: np.ndarray | sp.spmatrix
    active: np.ndarray
    M: int
    Q: int
    row_counts: np.ndarray | None = None
    split: "SplitCounts | None" = None

    def dense(self) -> np.ndarray:
        if sp.issparse(self.E):
            return np.asarray(self.E.todense())
        return self.E


def split_halves(corpus: ComparisonCorpus) -> SplitCounts:
    """Split every user's records into first and second half by position.

    A user with n records contributes the first ceil(n/2) to X and the rest
    to X_prime.  Every user must have at least two records.
    """
    M = corpus.M
    counts = np.bincount(corpus.user, minlength=M)
    if counts.min() < 2:
        u = int(np.argmin(counts))
        raise SplitError(f"user {u} has {int(counts[u])} comparison(s); need at least 2")

    order = np.argsort(corpus.user, kind="stable")
    offsets = np.concatenate([[0], np.cumsum(counts)[:-1]])
    rank_within = np.arange(corpus.n_records) - np.repeat(offsets, counts)
    first_half_sorted = rank_within < np.repeat((counts + 1) // 2, counts)
    first = np.zeros(corpus.n_records, dtype=bool)
    first[order] = first_half_sorted

    rows = corpus.pair_rows()
    W = pairs.num_pairs(corpus.Q)

    def mat(mask: np.ndarray) -> sp.csr_matrix:
        data = np.ones(int(mask.sum()))
        m = sp.coo_matrix((data, (rows[mask], corpus.user[mask])), shape=(W, M))
        return m.tocsr()

    return SplitCounts(mat(first), mat(~first), M, corpus.Q)


def normalized_halves(split: SplitCounts) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Row-normalized first and second halves."""
    return _normalize_rows(split.X), _normalize_rows(split.X_prime)


def _normalize_rows(X: sp.csr_matrix) -> sp.csr_matrix:
    rs = np.asarray(X.sum(axis=1)).ravel()
    inv = np.where(rs > 0, 1.0 / np.maximum(rs, 1e-300), 0.0)
    return sp.diags(inv) @ X


def cooccurrence(split: SplitCounts) -> CoocMatrix:
    """E-hat = M * row-normalized(X') row-normalized(X)^T."""
    rs1 = np.asarray(split.X.sum(axis=1)).ravel()
    rs2 = np.asarray(split.X_prime.sum(axis=1)).ravel()
    active = (rs1 + rs2) > 0
    Xn = _normalize_rows(split.X)
    Xpn = _normalize_rows(split.X_prime)
    E = split.M * (Xpn @ Xn.T)
    W = E.shape[0]
    if W <= DENSE_ROW_LIMIT:
        E = np.asarray(E.todense())
    else:
        E = E.tocsr()
    return CoocMatrix(E, active, split.M, split.Q, row_counts=rs1 + rs2,
                      split=split)


def analytic_cooccurrence(model: MixedMembershipModel) -> tuple[CoocMatrix, np.ndarray]:
    """Asymptotic co-occurrence matrix of a model, plus the asymptotic row
    scale (per-comparison observation mass of each pair row).

    The weight prior must have a full-rank second moment, otherwise the
    components are not identifiable from these statistics.
    """
    K = model.K
    if model.prior is None:
        raise ValueError("model carries no weight prior")
    a = model.prior.mean(K)
    R = model.prior.correlation(K)
    if np.linalg.matrix_rank(R) < K:
        raise ValueError("weight prior has a rank-deficient second moment")
    B = model.observation_matrix().entries
    Ba = B @ a
    active = Ba > 0
    Bbar = np.zeros_like(B)
    Bbar[active] = B[active] * a[None, :] / Ba[active, None]
    Rbar = R / np.outer(a, a)
    E = Bbar @ Rbar @ Bbar.T
    return CoocMatrix(E, active, 0, model.Q), Ba
