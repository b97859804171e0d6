"""From an estimated observation matrix to rankings and dispersions.

Four steps per component: turn B-hat into order probabilities by dividing
each row by itself plus its reversed row, round at one half into a win
relation, aggregate the wins into a ranking by Copeland counts, and read
the dispersion off the inverse order probabilities of the ranking's
adjacent pairs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import pairs
from .generator import atomic_write_text
from .mallows import RankingMatrix
from .permutations import Permutation, copeland_rank


class PostprocessError(ValueError):
    pass


@dataclass
class EstimatedModel:
    rankings: list[Permutation]
    dispersions: list[float]
    B_hat: np.ndarray
    beta_hat: np.ndarray  # NaN where a pair could not be resolved
    diagnostics: dict = field(default_factory=dict)

    @property
    def Q(self) -> int:
        return len(self.rankings[0])

    @property
    def K(self) -> int:
        return len(self.rankings)


def recover_beta(B_hat: RankingMatrix) -> tuple[np.ndarray, int]:
    """Order probabilities beta = B / (B + B_reversed), column by column.

    Entries whose pair has no mass in either direction are NaN; the count
    of such unresolved (pair, component) events is returned alongside.
    """
    e = B_hat.entries
    rev = pairs.reverse_rows(B_hat.Q)
    denom = e + e[rev]
    I, J = pairs.pair_arrays(B_hat.Q)
    unresolved = int(np.count_nonzero(denom[I < J] == 0))
    beta = np.where(denom > 0, e / np.maximum(denom, 1e-300), np.nan)
    return beta, unresolved


def round_relations(beta_hat: np.ndarray, Q: int) -> tuple[np.ndarray, int]:
    """Round order probabilities at one half into win indicators.

    Returns a (W, K) boolean array (True at row (i, j) means i beats j) and
    the number of exact ties, which are awarded to the smaller item id.
    Unresolved (NaN) pairs are decided in neither direction.
    """
    I, J = pairs.pair_arrays(Q)
    rev = pairs.reverse_rows(Q)
    forward = I < J
    wins = np.zeros_like(beta_hat, dtype=bool)
    with np.errstate(invalid="ignore"):
        b = beta_hat[forward]
        wins[forward] = b > 0.5
        wins[rev[forward]] = b < 0.5
        ties = b == 0.5
        wins[forward] |= ties  # tie goes to the pair's smaller item id
    return wins, int(np.count_nonzero(ties))


def recover_rankings(wins: np.ndarray, Q: int) -> list[Permutation]:
    """Copeland ranking per component from the win indicators."""
    return [copeland_rank(wins[:, k], Q, partial=True) for k in range(wins.shape[1])]


def estimate_dispersion(beta_col: np.ndarray, ranking: Permutation) -> tuple[float, bool]:
    """Dispersion from the adjacent pairs of the recovered ranking.

    For consecutive items of the ranking, 1/beta averages to 1 + phi, so
    phi is that mean minus one, clamped into [0, 1).  Returns the estimate
    and whether clamping fired.
    """
    Q = len(ranking)
    order = ranking.ranking
    total = 0.0
    for p in range(Q - 1):
        i, j = order[p], order[p + 1]
        b = beta_col[pairs.pair_row(i, j, Q)]
        if not np.isfinite(b) or b <= 0:
            raise PostprocessError(
                f"degenerate order probability for adjacent pair ({i}, {j}); cannot estimate dispersion"
            )
        total += 1.0 / b
    raw = total / (Q - 1) - 1.0
    hi = math.nextafter(1.0, 0.0)
    phi = min(max(raw, 0.0), hi)
    return phi, phi != raw


def postprocess(B_hat: RankingMatrix) -> EstimatedModel:
    """Run all four steps and collect diagnostics."""
    beta_hat, unresolved = recover_beta(B_hat)
    wins, ties = round_relations(beta_hat, B_hat.Q)
    rankings = recover_rankings(wins, B_hat.Q)
    dispersions = []
    clamped = []
    degenerate = []
    for k, sigma in enumerate(rankings):
        try:
            phi, was_clamped = estimate_dispersion(beta_hat[:, k], sigma)
        except PostprocessError:
            # A zero or non-finite adjacent order probability means the
            # component carries no usable dispersion signal; report the
            # clamp ceiling instead of aborting the whole estimate.
            phi, was_clamped = math.nextafter(1.0, 0.0), True
            degenerate.append(k)
        dispersions.append(phi)
        if was_clamped:
            clamped.append(k)
    diagnostics = {
        "unresolved_pairs": unresolved,
        "rounding_ties": ties,
        "clamped_components": clamped,
        "degenerate_dispersions": degenerate,
    }
    return EstimatedModel(rankings, dispersions, B_hat.entries, beta_hat, diagnostics)


def estimated_model_to_dict(est: EstimatedModel, seed: int | None = None,
                            extra_diagnostics: dict | None = None) -> dict:
    diagnostics = dict(est.diagnostics)
    if extra_diagnostics:
        diagnostics.update(extra_diagnostics)
    return {
        "Q": est.Q,
        "K": est.K,
        "components": [
            {"ranking": list(sigma.ranking), "phi": float(phi)}
            for sigma, phi in zip(est.rankings, est.dispersions)
        ],
        "prior": None,  # the pipeline does not recover the weight prior
        "seed": seed,
        "diagnostics": diagnostics,
    }


def write_estimated_model(est: EstimatedModel, path: str, seed: int | None = None,
                          extra_diagnostics: dict | None = None,
                          extra: dict | None = None) -> None:
    obj = estimated_model_to_dict(est, seed=seed, extra_diagnostics=extra_diagnostics)
    if extra:
        obj.update(extra)
    atomic_write_text(path, json.dumps(obj, indent=1) + "\n")
