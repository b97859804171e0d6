"""Extreme-row detection and simplex-constrained recovery of B.

In the asymptotic co-occurrence geometry the rows belonging to pairs that
are (approximately) specific to one component sit at the extreme points of
the row cloud; every other row is (approximately) a convex combination of
them.  Detection scores each row by the fraction of random directions in
which it strictly dominates its well-separated peers, then greedily picks K
mutually separated high scorers.  Regression writes every active row as a
simplex combination of the selected rows and rescales to recover B.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.sparse import issparse as sp_issparse

from . import pairs
from .mallows import RankingMatrix
from .moments import CoocMatrix, normalized_halves


class DetectionError(RuntimeError):
    pass


class RegressionError(RuntimeError):
    pass


@dataclass
class DetectionConfig:
    n_components: int
    n_projections: int | None = None  # default 150 per component
    zeta: float = 0.05
    seed: int = 0
    doubled_distance_rule: bool = False
    # A sampled pair row observed far less often than typical rows has a
    # co-occurrence profile made of a handful of users, and row
    # normalization inflates it into a spurious extreme point.  Rows whose
    # count falls below this fraction of the median active-row count are
    # not candidates.  Near-pure rows sit around half the median count, so
    # 0.2 keeps them while dropping the noise-dominated tail.  Ignored for
    # analytic matrices; 0 disables.
    min_count_fraction: float = 0.2

    def __post_init__(self):
        if self.n_components < 1:
            raise ValueError("need at least one component")
        if self.n_projections is not None and self.n_projections < 1:
            raise ValueError("need at least one projection")
        if self.zeta <= 0:
            raise ValueError("zeta must be positive")
        if self.min_count_fraction < 0:
            raise ValueError("min_count_fraction must be nonnegative")

    @property
    def resolved_projections(self) -> int:
        if self.n_projections is None:
            return 150 * self.n_components
        return self.n_projections


@dataclass
class NovelPairSet:
    """Detection outcome: selected rows and all solid-angle estimates."""

    rows: list[int]  # selected pair rows, in selection order
    item_pairs: list[tuple[int, int]]
    solid_angles: dict[int, float]  # q-hat for every candidate row


def _row_block(E, rows_idx: np.ndarray, cols_idx: np.ndarray | None) -> np.ndarray:
    """Dense block of E at the given rows (all columns when cols_idx is None)."""
    if sp_issparse(E):
        E = E.tocsr()[rows_idx]
        if cols_idx is not None:
            E = E[:, cols_idx]
        return np.asarray(E.todense())
    block = E[rows_idx]
    return block if cols_idx is None else block[:, cols_idx]


def _row_noise(cooc: CoocMatrix, act: np.ndarray, block: np.ndarray) -> np.ndarray:
    """Standard error of each candidate row of E over candidate columns.

    Row a of E is M times a sum over users of independent vectors
    v_m = X'n[a, m] * Xn[:, m]; the squared error of the sum is estimated
    as the sum of squared contributions minus the squared mean term.
    """
    Xn, Xpn = normalized_halves(cooc.split)
    M = cooc.M
    sub = Xn[act]
    colsq = np.asarray(sub.multiply(sub).sum(axis=0)).ravel()
    psub = Xpn[act]
    contrib = np.asarray(psub.multiply(psub) @ colsq[:, None]).ravel()
    row_sq = np.einsum("ij,ij->i", block, block)
    return np.sqrt(np.maximum(M**2 * contrib - row_sq / M, 0.0))


def _projection_directions(seed: int, P: int, W: int) -> np.ndarray:
    """One isotropic Gaussian direction per projection id.

    Each direction has its own stream keyed by (seed, projection id), so a
    run with more projections extends, rather than reshuffles, a smaller
    one.
    """
    dirs = np.empty((P, W))
    for r in range(P):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=(seed, r)))
        dirs[r] = rng.standard_normal(W)
    return dirs


def detect_novel_pairs(cooc: CoocMatrix, config: DetectionConfig) -> NovelPairSet:
    """Score candidate rows by estimated solid angle and pick K separated ones.

    Candidates are the active rows, minus rows observed too rarely for
    their normalized co-occurrence profile to be trustworthy (see
    ``DetectionConfig.min_count_fraction``).  For sampled matrices the row
    geometry is likewise restricted to the candidate coordinates: columns
    belonging to rarely observed pairs carry mostly sampling noise, which
    would otherwise swamp both the distances and the projections.  A row's
    score is the fraction of random directions on which its projection
    strictly exceeds every candidate at distance >= zeta/2 from it (ties
    score nothing).  Selection walks the scores in descending order,
    keeping a row only if it stays separated from everything already kept.
    For sampled matrices two rows are additionally considered the same
    extreme point when their distance is within three combined standard
    errors of the row estimates, because independent noisy copies of one
    underlying row land well apart even though they witness the same
    component; if that stricter rule cannot fill K slots the walk resumes
    with the plain zeta/2 rule.  Fails if fewer than K rows separated by
    zeta/2 exist.
    """
    K = config.n_components
    candidate = cooc.active.copy()
    if cooc.row_counts is not None and config.min_count_fraction > 0 and candidate.any():
        floor = config.min_count_fraction * float(np.median(cooc.row_counts[candidate]))
        candidate &= cooc.row_counts >= floor
    act = np.flatnonzero(candidate)
    if act.size < K:
        raise DetectionError(f"only {act.size} candidate rows, need at least {K}")
    sampled = cooc.split is not None
    rows = _row_block(cooc.E, act, act if sampled else None)
    n = act.size

    sq = np.einsum("ij,ij->i", rows, rows)
    gram = rows @ rows.T
    if config.doubled_distance_rule:
        # Literal printed rule: compare row i against 2 * row s.
        d2 = sq[:, None] - 4.0 * gram + 4.0 * sq[None, :]
    else:
        d2 = sq[:, None] - 2.0 * gram + sq[None, :]
    dist = np.sqrt(np.maximum(d2, 0.0))
    J = dist >= config.zeta / 2.0
    np.fill_diagonal(J, False)

    P = config.resolved_projections
    dirs = _projection_directions(config.seed, P, cooc.E.shape[1])
    proj = rows @ (dirs[:, act] if sampled else dirs).T  # (n, P)
    qhat = np.empty(n)
    for i in range(n):
        peers = J[i]
        if not peers.any():
            qhat[i] = 1.0
            continue
        peak = proj[peers].max(axis=0)
        qhat[i] = float(np.mean(proj[i] > peak))

    if sampled:
        nu = _row_noise(cooc, act, rows)
        noise_floor = 3.0 * np.hypot(nu[:, None], nu[None, :])
        distinct = J & (dist >= noise_floor)
    else:
        distinct = J

    order = np.lexsort((act, -qhat))
    selected: list[int] = []
    for cand in order:
        if all(distinct[s, cand] for s in selected):
            selected.append(int(cand))
            if len(selected) == K:
                break
    if len(selected) < K and distinct is not J:
        # Noise-scaled dedupe was too aggressive for this sample size; top
        # up with rows that pass the plain separation rule.
        for cand in order:
            if cand in selected:
                continue
            if all(J[s, cand] for s in selected):
                selected.append(int(cand))
                if len(selected) == K:
                    break
    if len(selected) < K:
        raise DetectionError(
            f"found only {len(selected)} mutually separated rows at zeta={config.zeta}, need {K}"
        )
    sel_rows = [int(act[s]) for s in selected]
    return NovelPairSet(
        rows=sel_rows,
        item_pairs=[pairs.row_pair(r, cooc.Q) for r in sel_rows],
        solid_angles={int(r): float(q) for r, q in zip(act, qhat)},
    )


def project_to_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("need a nonempty vector")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector must be finite")
    # The projection is invariant to shifting all coordinates, and any
    # coordinate more than 1 below the maximum projects to zero, so the
    # input can be rescaled into [-2, 0] to keep the cumulative sums
    # well conditioned for inputs of any magnitude.
    v = np.maximum(v - v.max(), -2.0)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, v.size + 1)
    cond = u - css / ind > 0
    rho = ind[cond][-1]
    theta = css[cond][-1] / rho
    return np.maximum(v - theta, 0.0)


def _minimize_simplex_quadratic(H, c, const, lips, epsilon, max_iter):
    """min_b b H b - 2 c b + const over the simplex.

    Accelerated projected gradient with fixed step 1/lips and a monotone
    safeguard: whenever the momentum step would increase the objective, the
    iteration restarts with a plain descent step from the last accepted
    point, so the objective never increases.
    """
    K = c.size
    b = np.full(K, 1.0 / K)
    f = float(b @ H @ b - 2.0 * c @ b + const)
    y = b
    t = 1.0
    delta = np.inf
    for it in range(1, max_iter + 1):
        b_new = project_to_simplex(y - (H @ y - c) / lips)
        f_new = float(b_new @ H @ b_new - 2.0 * c @ b_new + const)
        if f_new > f:
            b_new = project_to_simplex(b - (H @ b - c) / lips)
            f_new = float(b_new @ H @ b_new - 2.0 * c @ b_new + const)
            t = 1.0
            if f_new > f:
                # Even the plain descent step cannot improve: the objective
                # is numerically flat here, so the current point stands.
                return b, it, 0.0, True
        delta = abs(f - f_new)
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = b_new + ((t - 1.0) / t_next) * (b_new - b)
        b, f, t = b_new, f_new, t_next
        if delta <= epsilon * (1.0 + abs(f)):
            return b, it, delta, True
    return b, max_iter, delta, False


def estimate_ranking_matrix(
    cooc: CoocMatrix,
    row_scale: np.ndarray,
    novel: NovelPairSet,
    epsilon: float = 1e-4,
    max_iter: int = 10000,
    threads: int = 1,
) -> RankingMatrix:
    """Recover B by regressing every active row on the selected rows.

    The quadratic program for row w uses only entries of the co-occurrence
    matrix: with S the selected rows, minimize over the simplex
        b H b - 2 c b + E[w, w],
    H = (E[S, S] + E[S, S]^T) / 2 and c = (E[S, w] + E[w, S]) / 2.  An
    indefinite H is shifted by |lambda_min| + 1e-10.  Solutions are scaled
    by ``row_scale`` and the columns normalized to sum to one.
    """
    E = cooc.dense()
    W = E.shape[0]
    row_scale = np.asarray(row_scale, dtype=float)
    if row_scale.shape != (W,):
        raise ValueError(f"row_scale must have shape ({W},)")
    sel = np.asarray(novel.rows, dtype=np.int64)
    K = sel.size

    En = E[np.ix_(sel, sel)]
    H = 0.5 * (En + En.T)
    evals = np.linalg.eigvalsh(H)
    if evals[0] < 0:
        H = H + (abs(evals[0]) + 1e-10) * np.eye(K)
        evals = np.linalg.eigvalsh(H)
    # Floor keeps the step finite when the selected block is numerically
    # zero; any floor above the top eigenvalue still yields descent steps.
    lips = max(float(evals[-1]), 1e-12)

    act = np.flatnonzero(cooc.active)
    C = np.zeros((W, K))
    failures: list[tuple[int, float]] = []

    def solve_row(w: int):
        c = 0.5 * (E[sel, w] + E[w, sel])
        b, _, delta, ok = _minimize_simplex_quadratic(H, c, float(E[w, w]), lips, epsilon, max_iter)
        return w, b, delta, ok

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(solve_row, act))
    else:
        results = [solve_row(int(w)) for w in act]

    for w, b, delta, ok in results:
        if not ok:
            failures.append((w, delta))
        C[w] = row_scale[w] * b

    if failures:
        worst = max(failures, key=lambda t: t[1])
        raise RegressionError(
            f"{len(failures)} row(s) failed to converge within {max_iter} iterations; "
            f"worst residual {worst[1]:.3e} at row {worst[0]}"
        )
    colsum = C.sum(axis=0)
    if np.any(colsum <= 0):
        raise RegressionError("a recovered column has no mass")
    return RankingMatrix(C / colsum, cooc.Q, "B")
