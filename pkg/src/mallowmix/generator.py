"""Synthetic comparison corpora from mixed-membership Mallows populations.

Each user m draws a weight vector theta_m over the K shared components.
Every comparison then draws an unordered item pair from the pair
distribution, a component from theta_m, and reports the pair in the order
the sampled component ranks it.  Per-user RNG streams are derived from
(seed, user id), so generation is reproducible and independent of any
worker schedule.
"""

from __future__ import annotations

import json
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import pairs
from .mallows import MallowsComponent, RankingMatrix, build_ranking_matrix, _rim_sample_block
from .permutations import Permutation


@dataclass(frozen=True)
class DirichletPrior:
    """Symmetric Dirichlet over the K-simplex with concentration alpha0."""

    alpha0: float

    def __post_init__(self):
        if self.alpha0 <= 0:
            raise ValueError("alpha0 must be positive")

    def sample(self, rng: np.random.Generator, K: int) -> np.ndarray:
        # Gamma draws normalized to the simplex; redraw the (measure-zero,
        # but floating-point-possible) all-underflow case.
        while True:
            g = rng.gamma(self.alpha0, 1.0, K)
            s = g.sum()
            if s > 0:
                return g / s

    def mean(self, K: int) -> np.ndarray:
        return np.full(K, 1.0 / K)

    def correlation(self, K: int) -> np.ndarray:
        a0 = self.alpha0
        total = K * a0
        off = a0 * a0
        diag = a0 * (a0 + 1.0)
        R = np.full((K, K), off)
        np.fill_diagonal(R, diag)
        return R / (total * (total + 1.0))


@dataclass(frozen=True)
class VertexPrior:
    """Point masses on the simplex vertices: each user follows one component."""

    probs: tuple[float, ...]

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("probs must be a nonempty vector")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("probs must be nonnegative and sum to one")

    def sample(self, rng: np.random.Generator, K: int) -> np.ndarray:
        if len(self.probs) != K:
            raise ValueError("class probabilities do not match K")
        z = int(np.searchsorted(np.cumsum(self.probs), rng.random(), side="right"))
        theta = np.zeros(K)
        theta[min(z, K - 1)] = 1.0
        return theta

    def mean(self, K: int) -> np.ndarray:
        if len(self.probs) != K:
            raise ValueError("class probabilities do not match K")
        return np.asarray(self.probs, dtype=float)

    def correlation(self, K: int) -> np.ndarray:
        return np.diag(self.mean(K))


@dataclass(frozen=True)
class FixedWeights:
    """Every user shares one explicit weight vector."""

    weights: tuple[float, ...]

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a nonempty vector")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("weights must be nonnegative and sum to one")

    def sample(self, rng: np.random.Generator, K: int) -> np.ndarray:
        if len(self.weights) != K:
            raise ValueError("weights do not match K")
        return np.asarray(self.weights, dtype=float)

    def mean(self, K: int) -> np.ndarray:
        if len(self.weights) != K:
            raise ValueError("weights do not match K")
        return np.asarray(self.weights, dtype=float)

    def correlation(self, K: int) -> np.ndarray:
        w = self.mean(K)
        return np.outer(w, w)


@dataclass
class MixedMembershipModel:
    """K Mallows components, a weight prior, and a pair distribution.

    ``pair_probs`` holds one probability per unordered pair in the order of
    :func:`pairs.unordered_arrays`; None means uniform.
    """

    components: list[MallowsComponent]
    prior: object
    pair_probs: np.ndarray | None = None

    def __post_init__(self):
        if not self.components:
            raise ValueError("need at least one component")
        Q = self.components[0].Q
        if any(c.Q != Q for c in self.components):
            raise ValueError("components disagree on the number of items")
        if self.pair_probs is not None:
            p = np.asarray(self.pair_probs, dtype=float)
            if p.shape != (pairs.num_unordered(Q),):
                raise ValueError(f"pair_probs must have length {pairs.num_unordered(Q)}")
            if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
                raise ValueError("pair_probs must be a probability vector")
            self.pair_probs = p

    @property
    def Q(self) -> int:
        return self.components[0].Q

    @property
    def K(self) -> int:
        return len(self.components)

    def pair_distribution(self) -> np.ndarray:
        """Probability of each unordered pair, uniform when unspecified."""
        n = pairs.num_unordered(self.Q)
        if self.pair_probs is None:
            return np.full(n, 1.0 / n)
        return self.pair_probs

    def ranking_matrix(self) -> RankingMatrix:
        return build_ranking_matrix(self.components)

    def observation_matrix(self) -> RankingMatrix:
        """B: probability of observing each ordered pair given a component.

        Row (i, j) is the unordered-pair probability times the chance the
        component orders i above j, so every column sums to one.
        """
        beta = self.ranking_matrix().entries
        mu_row = self.pair_distribution()[pairs.unordered_index(self.Q)]
        return RankingMatrix(mu_row[:, None] * beta, self.Q, "B")


@dataclass
class ComparisonCorpus:
    """Flat record arrays of one corpus: who compared what and who won."""

    Q: int
    M: int
    user: np.ndarray
    winner: np.ndarray
    loser: np.ndarray
    labels: np.ndarray | None = None  # generating component per record, if kept
    N: int | None = None  # comparisons per user, if constant

    def __post_init__(self):
        self.user = np.asarray(self.user, dtype=np.int64)
        self.winner = np.asarray(self.winner, dtype=np.int64)
        self.loser = np.asarray(self.loser, dtype=np.int64)
        n = self.user.size
        if self.winner.size != n or self.loser.size != n:
            raise ValueError("record arrays must have equal length")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.size != n:
                raise ValueError("labels must have one entry per record")

    @property
    def n_records(self) -> int:
        return self.user.size

    def pair_rows(self) -> np.ndarray:
        """Ordered-pair row index of every record."""
        return pairs.pair_row(self.winner, self.loser, self.Q)


# Stream id for drawing the model itself (references etc.); user streams use
# ids 0..M-1, so any id at least M stays collision-free.
MODEL_STREAM = 2**63 - 1


def _user_rng(seed: int, user: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=(seed, user)))


def _generate_user(model, beta, cum_mu, uI, uJ, seed, u, N, method):
    rng = _user_rng(seed, u)
    K = model.K
    theta = model.prior.sample(rng, K)
    cum_theta = np.cumsum(theta)
    upair = np.searchsorted(cum_mu, rng.random(N), side="right")
    upair = np.minimum(upair, cum_mu.size - 1)
    z = np.searchsorted(cum_theta, rng.random(N), side="right")
    z = np.minimum(z, K - 1)
    i = uI[upair]
    j = uJ[upair]
    if method == "marginal":
        # The order of one fresh ranking restricted to {i, j} is a Bernoulli
        # draw with the closed-form pair marginal, so sample that directly.
        p_first = beta[pairs.pair_row(i, j, model.Q), z]
        first = rng.random(N) < p_first
    else:  # method == "rim": sample the full ranking per comparison
        first = np.empty(N, dtype=bool)
        for k in range(K):
            sel = np.flatnonzero(z == k)
            if sel.size == 0:
                continue
            pos = _rim_sample_block(model.components[k], sel.size, rng)
            first[sel] = pos[np.arange(sel.size), i[sel] - 1] < pos[np.arange(sel.size), j[sel] - 1]
    win = np.where(first, i, j)
    lose = np.where(first, j, i)
    return theta, win, lose, z


def generate(
    model: MixedMembershipModel,
    M: int,
    N: int,
    seed: int,
    method: str = "marginal",
    keep_labels: bool = False,
    threads: int = 1,
) -> tuple[ComparisonCorpus, np.ndarray]:
    """Sample a corpus of M users with N comparisons each.

    Returns the corpus and the (M, K) matrix of sampled user weights.
    ``method`` "marginal" draws each comparison's order from the closed-form
    pair marginal; "rim" samples a full ranking per comparison.  Both follow
    the same observation law; "marginal" is the fast default.
    """
    if M < 1 or N < 1:
        raise ValueError("M and N must be positive")
    if method not in ("marginal", "rim"):
        raise ValueError(f"unknown method {method!r}")
    if model.prior is None:
        raise ValueError("model carries no weight prior; cannot generate")
    beta = model.ranking_matrix().entries
    mu = model.pair_distribution()
    cum_mu = np.cumsum(mu)
    uI, uJ = pairs.unordered_arrays(model.Q)

    def work(u):
        return _generate_user(model, beta, cum_mu, uI, uJ, seed, u, N, method)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(work, range(M)))
    else:
        results = [work(u) for u in range(M)]

    thetas = np.stack([r[0] for r in results])
    winner = np.concatenate([r[1] for r in results])
    loser = np.concatenate([r[2] for r in results])
    labels = np.concatenate([r[3] for r in results]) if keep_labels else None
    user = np.repeat(np.arange(M, dtype=np.int64), N)
    corpus = ComparisonCorpus(model.Q, M, user, winner, loser, labels=labels, N=N)
    return corpus, thetas


def empirical_beta(corpus: ComparisonCorpus, K: int) -> np.ndarray:
    """Per-component win frequencies from a labeled corpus.

    Entry (row(i, j), k) is the fraction of label-k comparisons of {i, j}
    won by i; NaN where the pair was never compared under component k.
    """
    if corpus.labels is None:
        raise ValueError("corpus has no component labels")
    W = pairs.num_pairs(corpus.Q)
    wins = np.zeros((W, K))
    np.add.at(wins, (corpus.pair_rows(), corpus.labels), 1.0)
    losses = wins[pairs.reverse_rows(corpus.Q)]
    total = wins + losses
    with np.errstate(invalid="ignore"):
        return np.where(total > 0, wins / np.maximum(total, 1e-300), np.nan)


# ---------------------------------------------------------------------------
# file formats


def atomic_write_text(path: str, text: str) -> None:
    """Write then rename, so readers never observe a partial file."""
    d = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_corpus(corpus: ComparisonCorpus, path: str, meta_extra: dict | None = None) -> None:
    """One JSON object per line; first line carries corpus metadata."""
    meta = {"Q": corpus.Q, "M": corpus.M, "N": corpus.N}
    if meta_extra:
        meta.update(meta_extra)
    lines = [json.dumps({"meta": meta})]
    u = corpus.user
    w = corpus.winner
    l = corpus.loser
    lines.extend(
        '{"user": %d, "win": %d, "lose": %d}' % (u[r], w[r], l[r])
        for r in range(corpus.n_records)
    )
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_corpus(path: str) -> ComparisonCorpus:
    users: list[int] = []
    wins: list[int] = []
    loses: list[int] = []
    meta = None
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if meta is None and users == [] and '"meta"' in line:
                obj = json.loads(line)
                if "meta" in obj:
                    meta = obj["meta"]
                    continue
            obj = json.loads(line)
            users.append(obj["user"])
            wins.append(obj["win"])
            loses.append(obj["lose"])
    if not users:
        raise ValueError(f"no comparison records in {path}")
    user = np.asarray(users, dtype=np.int64)
    winner = np.asarray(wins, dtype=np.int64)
    loser = np.asarray(loses, dtype=np.int64)
    if meta is not None:
        Q = int(meta["Q"])
        M = int(meta["M"])
        N = meta.get("N")
        N = int(N) if N is not None else None
    else:
        Q = int(max(winner.max(), loser.max()))
        M = int(user.max()) + 1
        N = None
    return ComparisonCorpus(Q, M, user, winner, loser, N=N)


def _prior_to_json(prior) -> dict:
    if isinstance(prior, DirichletPrior):
        return {"type": "dirichlet", "alpha0": prior.alpha0}
    if isinstance(prior, VertexPrior):
        return {"type": "vertex", "probs": list(prior.probs)}
    if isinstance(prior, FixedWeights):
        return {"type": "fixed", "weights": list(prior.weights)}
    raise ValueError(f"unknown prior type {type(prior).__name__}")


def _prior_from_json(obj: dict):
    t = obj.get("type")
    if t == "dirichlet":
        return DirichletPrior(float(obj["alpha0"]))
    if t == "vertex":
        return VertexPrior(tuple(float(p) for p in obj["probs"]))
    if t == "fixed":
        return FixedWeights(tuple(float(w) for w in obj["weights"]))
    raise ValueError(f"unknown prior type {t!r}")


def model_to_dict(model: MixedMembershipModel, seed: int | None = None) -> dict:
    out = {
        "Q": model.Q,
        "K": model.K,
        "components": [
            {"ranking": list(c.reference.ranking), "phi": c.dispersion}
            for c in model.components
        ],
        "prior": _prior_to_json(model.prior),
        "seed": seed,
    }
    if model.pair_probs is not None:
        uI, uJ = pairs.unordered_arrays(model.Q)
        out["pair_dist"] = [[int(i), int(j), float(p)] for i, j, p in zip(uI, uJ, model.pair_probs)]
    return out


def model_from_dict(obj: dict) -> MixedMembershipModel:
    Q = int(obj["Q"])
    comps = []
    for c in obj["components"]:
        ref = Permutation.from_ranking([int(x) for x in c["ranking"]])
        if len(ref) != Q:
            raise ValueError("component ranking length disagrees with Q")
        comps.append(MallowsComponent(ref, float(c["phi"])))
    if "K" in obj and int(obj["K"]) != len(comps):
        raise ValueError("K disagrees with the number of components")
    # Estimated-model files carry no weight prior; such models can be
    # evaluated and used for prediction but not for generation.
    prior = _prior_from_json(obj["prior"]) if obj.get("prior") is not None else None
    pair_probs = None
    if obj.get("pair_dist"):
        pair_probs = np.zeros(pairs.num_unordered(Q))
        uI, uJ = pairs.unordered_arrays(Q)
        index = {(int(a), int(b)): r for r, (a, b) in enumerate(zip(uI, uJ))}
        for i, j, p in obj["pair_dist"]:
            lo, hi = min(int(i), int(j)), max(int(i), int(j))
            pair_probs[index[(lo, hi)]] = float(p)
    return MixedMembershipModel(comps, prior, pair_probs)


def write_model(model: MixedMembershipModel, path: str, seed: int | None = None,
                extra: dict | None = None) -> None:
    obj = model_to_dict(model, seed=seed)
    if extra:
        obj.update(extra)
    atomic_write_text(path, json.dumps(obj, indent=1) + "\n")


def read_model(path: str) -> MixedMembershipModel:
    with open(path) as fh:
        return model_from_dict(json.load(fh))
