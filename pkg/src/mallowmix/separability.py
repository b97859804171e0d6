"""Approximate separability of a beta matrix, and how often random
reference sets have it.

A beta matrix is lambda-approximately separable when every component k
owns a witness row: a pair on which k's order probability is positive and
every other component's is at most lambda times it.  Witness rows are what
the extreme-row detection ultimately finds, so the Monte Carlo probability
of separability under uniformly random references measures how often the
pipeline's structural assumption holds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import pairs
from .mallows import RankingMatrix, marginal_table


@dataclass
class SeparabilityReport:
    separable: bool
    lam: float
    per_component_best_lambda: list[float]
    witness_rows: list[int]  # row achieving each component's best ratio, -1 if none


@dataclass
class SeparabilityEstimate:
    probability: float
    std_error: float
    lower_bound: float
    runs: int


def check_separability(beta, lam: float) -> SeparabilityReport:
    """Exhaustive witness scan of a beta matrix at threshold ``lam``."""
    if isinstance(beta, RankingMatrix):
        beta = beta.entries
    beta = np.asarray(beta, dtype=float)
    if not 0.0 <= lam < 1.0:
        raise ValueError(f"lambda must lie in [0, 1), got {lam}")
    W, K = beta.shape
    best: list[float] = []
    witnesses: list[int] = []
    for k in range(K):
        positive = beta[:, k] > 0
        if not positive.any():
            best.append(math.inf)
            witnesses.append(-1)
            continue
        if K == 1:
            best.append(0.0)
            witnesses.append(int(np.flatnonzero(positive)[0]))
            continue
        others = np.delete(beta, k, axis=1).max(axis=1)
        ratio = np.full(W, math.inf)
        ratio[positive] = others[positive] / beta[positive, k]
        w = int(np.argmin(ratio))
        best.append(float(ratio[w]))
        witnesses.append(w)
    separable = all(b <= lam for b in best)
    return SeparabilityReport(separable, lam, best, witnesses)


def _random_beta(Q: int, K: int, table: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Beta for K uniformly random references sharing one dispersion."""
    I, J = pairs.pair_arrays(Q)
    beta = np.empty((pairs.num_pairs(Q), K))
    for k in range(K):
        ranking = rng.permutation(Q) + 1
        pos = np.empty(Q + 1, dtype=np.int64)
        pos[ranking] = np.arange(1, Q + 1)
        gap = pos[J] - pos[I]
        fwd = table[np.clip(gap, 1, Q - 1)]
        bwd = 1.0 - table[np.clip(-gap, 1, Q - 1)]
        beta[:, k] = np.where(gap > 0, fwd, bwd)
    return beta


def _is_separable(beta: np.ndarray, lam: float) -> bool:
    """Same verdict as check_separability, via per-row top-two statistics.

    A witness for k must make beta[:, k] the strict row maximum (any tie
    forces a ratio of one, which fails every lambda below one), so it is
    enough to compare each row's top value against its second largest.
    """
    K = beta.shape[1]
    if K == 1:
        return bool((beta[:, 0] > 0).any())
    part = np.partition(beta, K - 2, axis=1)
    top = part[:, -1]
    second = part[:, -2]
    good = (top > 0) & (second <= lam * top)
    if not good.any():
        return False
    covered = (beta[good] >= top[good, None]).any(axis=0)
    return bool(covered.all())


def eq6_margin(phi: float, lam: float, epsilon: float = 0.05) -> int:
    """Positional margin L used by the closed-form lower bound."""
    if phi == 0.0:
        ratio = 0.0
    elif lam == 0.0:
        raise ValueError("lambda = 0 has no finite margin for positive phi")
    else:
        ratio = math.log(lam) / math.log(phi)
    return math.ceil((1.0 + ratio) * (1.0 + epsilon))


def separability_lower_bound(Q: int, K: int, phi: float, lam: float,
                             epsilon: float = 0.05) -> float:
    """Closed-form lower bound 1 - K exp(-Q / L^(2K-1)) on the probability.

    Often vacuous (negative) unless Q is much larger than L^(2K-1).
    Returns -inf when the margin is undefined (lam = 0 with positive phi).
    """
    try:
        L = eq6_margin(phi, lam, epsilon)
    except ValueError:
        return -math.inf
    return 1.0 - K * math.exp(-Q / float(L) ** (2 * K - 1))


def separability_probability(Q: int, K: int, phi: float, lam: float,
                             runs: int, seed: int = 0) -> SeparabilityEstimate:
    """Monte Carlo probability that K uniformly random references with a
    shared dispersion are lambda-approximately separable.

    Each run derives its RNG stream from (seed, run), so results do not
    depend on evaluation order.
    """
    if runs < 1:
        raise ValueError("need at least one run")
    if not 0.0 <= lam < 1.0:
        raise ValueError(f"lambda must lie in [0, 1), got {lam}")
    table = marginal_table(Q, phi)
    hits = 0
    for r in range(runs):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=(seed, r)))
        beta = _random_beta(Q, K, table, rng)
        if _is_separable(beta, lam):
            hits += 1
    p = hits / runs
    se = math.sqrt(p * (1.0 - p) / runs)
    bound = separability_lower_bound(Q, K, phi, lam)
    return SeparabilityEstimate(p, se, bound, runs)
