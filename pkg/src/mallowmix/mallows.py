"""Mallows components: mass function, insertion sampling, pair marginals.

A component is a reference ranking together with a dispersion phi in [0, 1).
Probability of a ranking sigma decays as phi raised to the Kendall tau
distance from the reference; phi = 0 is the point mass on the reference and
phi -> 1 approaches uniform (phi = 1 itself is rejected as unidentifiable).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import pairs
from .permutations import Permutation, kendall_tau

# Below this distance from 1 the closed geometric-sum form loses all
# precision, so the limit value is substituted instead.
_PHI_ONE_TOL = 1e-12


def geometric_sum(phi: float, n: int) -> float:
    """1 + phi + ... + phi^(n-1), stable for phi in [0, 1]."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    if abs(1.0 - phi) < _PHI_ONE_TOL:
        return float(n)
    return (1.0 - phi**n) / (1.0 - phi)


def mallows_normalizer(Q: int, phi: float) -> float:
    """Sum of phi^d(sigma, ref) over all Q! rankings."""
    z = 1.0
    for i in range(1, Q + 1):
        z *= geometric_sum(phi, i)
    return z


@dataclass(frozen=True)
class MallowsComponent:
    reference: Permutation
    dispersion: float

    def __post_init__(self):
        if not 0.0 <= self.dispersion < 1.0:
            raise ValueError(f"dispersion must lie in [0, 1), got {self.dispersion}")

    @property
    def Q(self) -> int:
        return len(self.reference)


def mallows_pmf(component: MallowsComponent, sigma: Permutation) -> float:
    """Probability of ``sigma`` under the component."""
    if len(sigma) != component.Q:
        raise ValueError("ranking length does not match the component")
    d = kendall_tau(component.reference, sigma)
    phi = component.dispersion
    return phi**d / mallows_normalizer(component.Q, phi)


def _insertion_cumweights(phi: float, Q: int) -> list[np.ndarray]:
    """Cumulative insertion weights per level i = 1..Q.

    At level i the item is placed at position l in 1..i with probability
    phi^(i-l) / (1 + phi + ... + phi^(i-1)).
    """
    out = []
    for i in range(1, Q + 1):
        w = phi ** (i - np.arange(1, i + 1, dtype=float))
        out.append(np.cumsum(w))
    return out


def rim_sample(component: MallowsComponent, rng: np.random.Generator) -> Permutation:
    """Draw one ranking by repeated insertion; exact for the Mallows pmf."""
    Q = component.Q
    cum = _insertion_cumweights(component.dispersion, Q)
    us = rng.random(Q)
    out: list[int] = []
    for level, item in enumerate(component.reference.ranking, start=1):
        c = cum[level - 1]
        slot = int(np.searchsorted(c, us[level - 1] * c[-1], side="right"))
        out.insert(min(slot, level - 1), item)
    return Permutation.from_ranking(out)


def _rim_sample_block(component: MallowsComponent, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` rankings as an (n, Q) position matrix; same process as rim_sample."""
    Q = component.Q
    cum = _insertion_cumweights(component.dispersion, Q)
    us = rng.random((n, Q))
    positions = np.empty((n, Q), dtype=np.int64)
    ref = component.reference.ranking
    for s in range(n):
        out: list[int] = []
        row = us[s]
        for level in range(1, Q + 1):
            c = cum[level - 1]
            slot = int(np.searchsorted(c, row[level - 1] * c[-1], side="right"))
            out.insert(min(slot, level - 1), ref[level - 1])
        for p, item in enumerate(out, start=1):
            positions[s, item - 1] = p
    return positions


def pairwise_marginal(gap: int, phi: float) -> float:
    """Probability that i is ranked above j when the reference puts j
    ``gap`` positions below i.

    Uses the all-positive-terms form
        sum_{l=0}^{gap-1} (l+1) phi^l / (G_gap * G_{gap+1}),
    where G_n is the n-term geometric sum, so no cancellation occurs for
    any phi in [0, 1).
    """
    if gap < 1:
        raise ValueError("gap must be at least 1")
    if not 0.0 <= phi < 1.0:
        raise ValueError(f"phi must lie in [0, 1), got {phi}")
    ls = np.arange(gap, dtype=float)
    num = float(np.sum((ls + 1.0) * phi**ls))
    return num / (geometric_sum(phi, gap) * geometric_sum(phi, gap + 1))


def marginal_table(Q: int, phi: float) -> np.ndarray:
    """Vector t with t[g] = pairwise_marginal(g, phi) for g = 1..Q-1.

    Entry 0 is NaN (a pair cannot have gap zero).
    """
    if Q < 2:
        raise ValueError("need at least two items")
    ls = np.arange(Q - 1, dtype=float)
    nums = np.cumsum((ls + 1.0) * phi**ls)
    gs = np.cumsum(phi ** np.arange(Q, dtype=float))  # gs[n-1] = geometric_sum(phi, n)
    table = np.full(Q, np.nan)
    g = np.arange(1, Q)
    table[1:] = nums[g - 1] / (gs[g - 1] * gs[g])
    return table


def marginal_ratio_bound(L: int, phi: float) -> float:
    """Upper bound L phi^(L-1) / (1 + L phi^(L-1)) on the probability that a
    pair is ranked against the reference when its positional distance is
    L - 1."""
    if L < 2:
        raise ValueError("L must be at least 2")
    if not 0.0 <= phi < 1.0:
        raise ValueError(f"phi must lie in [0, 1), got {phi}")
    x = L * phi ** (L - 1)
    return x / (1.0 + x)


@dataclass
class RankingMatrix:
    """A W x K matrix over ordered pair rows.

    ``kind`` records what the entries mean:
      * "beta": per-component probability that the row's pair is concordant,
      * "B": observation probabilities (pair distribution times beta),
        column-stochastic,
      * "B-bar": row-normalized observation matrix.
    """

    entries: np.ndarray
    Q: int
    kind: str = "beta"

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=float)
        W = pairs.num_pairs(self.Q)
        if self.entries.ndim != 2 or self.entries.shape[0] != W:
            raise ValueError(f"entries must be ({W}, K), got {self.entries.shape}")
        if self.kind not in ("beta", "B", "B-bar"):
            raise ValueError(f"unknown kind {self.kind!r}")

    @property
    def K(self) -> int:
        return self.entries.shape[1]

    def validate(self, tol: float = 1e-9) -> None:
        e = self.entries
        if np.any(~np.isfinite(e)) or np.any(e < -tol):
            raise ValueError("entries must be finite and nonnegative")
        if self.kind == "beta":
            rev = pairs.reverse_rows(self.Q)
            if np.max(np.abs(e + e[rev] - 1.0)) > tol:
                raise ValueError("beta and its reverse rows must sum to one")
        elif self.kind == "B":
            if np.max(np.abs(e.sum(axis=0) - 1.0)) > tol:
                raise ValueError("columns of B must sum to one")
        else:  # B-bar: every row is either zero or a distribution
            rs = e.sum(axis=1)
            bad = (rs > tol) & (np.abs(rs - 1.0) > tol)
            if bad.any():
                raise ValueError("nonzero rows of B-bar must sum to one")


def build_ranking_matrix(components: list[MallowsComponent]) -> RankingMatrix:
    """Closed-form beta matrix for a list of components sharing the items."""
    if not components:
        raise ValueError("need at least one component")
    Q = components[0].Q
    if any(c.Q != Q for c in components):
        raise ValueError("components disagree on the number of items")
    I, J = pairs.pair_arrays(Q)
    entries = np.empty((pairs.num_pairs(Q), len(components)))
    for k, comp in enumerate(components):
        pos = np.asarray(comp.reference.positions)
        gap = pos[J - 1] - pos[I - 1]
        table = marginal_table(Q, comp.dispersion)
        fwd = table[np.clip(gap, 1, Q - 1)]
        bwd = 1.0 - table[np.clip(-gap, 1, Q - 1)]
        entries[:, k] = np.where(gap > 0, fwd, bwd)
    return RankingMatrix(entries, Q, "beta")


def brute_force_beta(components: list[MallowsComponent], max_Q: int = 7) -> RankingMatrix:
    """Beta by explicit enumeration of all Q! rankings.  Refuses Q > max_Q."""
    if not components:
        raise ValueError("need at least one component")
    Q = components[0].Q
    if any(c.Q != Q for c in components):
        raise ValueError("components disagree on the number of items")
    if Q > max_Q:
        raise ValueError(f"enumeration over {Q}! rankings refused (max_Q={max_Q})")
    W = pairs.num_pairs(Q)
    entries = np.zeros((W, len(components)))
    row_of = {}
    for w in range(W):
        row_of[pairs.row_pair(w, Q)] = w
    for perm in itertools.permutations(range(1, Q + 1)):
        sigma = Permutation.from_ranking(perm)
        up = [(i, j) for i in range(1, Q + 1) for j in range(1, Q + 1)
              if i != j and sigma.positions[i - 1] < sigma.positions[j - 1]]
        for k, comp in enumerate(components):
            p = mallows_pmf(comp, sigma)
            for ij in up:
                entries[row_of[ij], k] += p
    return RankingMatrix(entries, Q, "beta")
