"""Batch command line for the comparison-mixture pipeline.

Subcommands: generate a synthetic corpus, estimate components from a
corpus, evaluate an estimate against the truth, measure separability
probability, dump an exact small-scale order-probability table, and score
held-out comparisons.  Every output file embeds the resolved configuration
and seed, and is written atomically (write-then-rename), so a failed run
never leaves a partial file behind.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time

import numpy as np

from . import pairs
from .estimator import DetectionConfig, detect_novel_pairs, estimate_ranking_matrix
from .evaluate import align_and_score, infer_weights, predict_loglik
from .generator import (
    MODEL_STREAM,
    DirichletPrior,
    MixedMembershipModel,
    VertexPrior,
    atomic_write_text,
    generate,
    model_to_dict,
    read_corpus,
    read_model,
    write_corpus,
)
from .mallows import MallowsComponent, brute_force_beta
from .moments import analytic_cooccurrence, cooccurrence, split_halves
from .permutations import Permutation
from .post import postprocess, write_estimated_model
from .separability import separability_probability


class StageError(Exception):
    """An error in one named stage of a command."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


def _stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


def _model_rng(seed: int) -> np.random.Generator:
    # Reserved stream id so the model draw never collides with user streams.
    return np.random.default_rng(np.random.SeedSequence(entropy=(seed, MODEL_STREAM)))


def _phi_list(phis: list[float] | None, K: int) -> list[float]:
    if not phis:
        raise ValueError("--phi is required (one shared value or one per component)")
    if len(phis) == 1:
        return phis * K
    if len(phis) != K:
        raise ValueError(f"got {len(phis)} --phi values for {K} components; need 1 or {K}")
    return list(phis)


def _build_prior(alpha: float | None, vertex: str | None, K: int):
    if alpha is not None and vertex is not None:
        raise ValueError("--alpha and --vertex-prior are mutually exclusive")
    if vertex is not None:
        probs = tuple(float(x) for x in vertex.split(","))
        if len(probs) != K:
            raise ValueError(f"--vertex-prior needs {K} comma-separated probabilities")
        return VertexPrior(probs)
    return DirichletPrior(0.1 if alpha is None else alpha)


def _build_model(args) -> MixedMembershipModel:
    """Model from a file when -i is given, else from flags with references
    drawn uniformly at random from the seed's reserved stream."""
    if args.input:
        return _stage("read", read_model, args.input)
    if args.items is None or args.components is None:
        raise StageError("config", ValueError("--items and --components are required without -i"))
    Q, K = args.items, args.components
    phis = _stage("config", _phi_list, args.phi, K)
    prior = _stage("config", _build_prior, args.alpha, args.vertex_prior, K)
    rng = _model_rng(args.seed)
    components = [
        MallowsComponent(Permutation.from_ranking([int(x) + 1 for x in rng.permutation(Q)]), phi)
        for phi in phis
    ]
    return MixedMembershipModel(components, prior)


def _write_json(path: str, obj: dict) -> None:
    atomic_write_text(path, json.dumps(obj, indent=1) + "\n")


def _finite_or_none(x: float) -> float | None:
    return x if math.isfinite(x) else None


# ---------------------------------------------------------------------------
# subcommands


def cmd_generate(args) -> int:
    if args.comparisons < 2:
        raise StageError("config", ValueError("--comparisons must be at least 2"))
    model = _build_model(args)
    if model.prior is None:
        raise StageError("config", ValueError("model file has no weight prior; cannot generate"))
    config = {
        "command": "generate",
        "items": model.Q,
        "components": model.K,
        "users": args.users,
        "comparisons": args.comparisons,
        "phi": [c.dispersion for c in model.components],
        "prior": model_to_dict(model)["prior"],
        "seed": args.seed,
        "threads": args.threads,
        "input": args.input,
        "output": args.output,
        "truth": args.truth,
    }
    corpus, thetas = _stage(
        "generate", generate, model, args.users, args.comparisons, args.seed, threads=args.threads
    )
    _stage("write", write_corpus, corpus, args.output, {"seed": args.seed, "config": config})
    truth = model_to_dict(model, seed=args.seed)
    truth["config"] = config
    truth["weights"] = thetas.tolist()
    _stage("write", _write_json, args.truth, truth)
    print(f"wrote {corpus.n_records} records to {args.output} and the truth to {args.truth}")
    return 0


def cmd_estimate(args) -> int:
    t0 = time.perf_counter()
    K = args.components
    if args.exact_moments:
        truth = _stage("read", read_model, args.exact_moments)
        cooc, row_scale = _stage("moments", analytic_cooccurrence, truth)
    else:
        if not args.input:
            raise StageError("config", ValueError("-i corpus is required without --exact-moments"))
        corpus = _stage("read", read_corpus, args.input)
        split = _stage("split", split_halves, corpus)
        cooc = _stage("moments", cooccurrence, split)
        row_scale = split.row_scale()
    cfg = DetectionConfig(
        n_components=K,
        n_projections=args.projections,
        zeta=args.zeta,
        seed=args.seed,
        doubled_distance_rule=args.doubled_distance_rule,
        min_count_fraction=args.min_count_fraction,
    )
    novel = _stage("detection", detect_novel_pairs, cooc, cfg)
    B_hat = _stage(
        "regression",
        estimate_ranking_matrix,
        cooc,
        row_scale,
        novel,
        epsilon=args.epsilon,
        threads=args.threads,
    )
    est = _stage("postprocess", postprocess, B_hat)
    config = {
        "command": "estimate",
        "items": cooc.Q,
        "components": K,
        "projections": cfg.resolved_projections,
        "zeta": args.zeta,
        "epsilon": args.epsilon,
        "doubled_distance_rule": args.doubled_distance_rule,
        "min_count_fraction": args.min_count_fraction,
        "seed": args.seed,
        "threads": args.threads,
        "exact_moments": args.exact_moments,
        "input": args.input,
        "output": args.output,
    }
    extra_diag = {
        "selected_rows": list(novel.rows),
        "selected_pairs": [[i, j] for i, j in novel.item_pairs],
        "selected_solid_angles": [novel.solid_angles[r] for r in novel.rows],
    }
    _stage(
        "write",
        write_estimated_model,
        est,
        args.output,
        seed=args.seed,
        extra_diagnostics=extra_diag,
        extra={"config": config},
    )
    elapsed = time.perf_counter() - t0
    print(
        f"estimated {K} components over {cooc.Q} items in {elapsed:.2f}s; "
        f"selected pairs {novel.item_pairs}; wrote {args.output}"
    )
    return 0


def cmd_evaluate(args) -> int:
    truth = _stage("read", read_model, args.truth)
    estimate = _stage("read", read_model, args.input)
    report = _stage("score", align_and_score, truth, estimate)
    obj = {
        "normalized_kendall": report.normalized_error,
        "per_component": report.per_component_kendall,
        "phi_errors": report.dispersion_abs_errors,
        "matching": report.matching,
        "config": {
            "command": "evaluate",
            "truth": args.truth,
            "input": args.input,
            "output": args.output,
        },
    }
    text = json.dumps(obj, indent=1)
    if args.output:
        _stage("write", atomic_write_text, args.output, text + "\n")
    print(text)
    return 0


def cmd_separability(args) -> int:
    if args.phi is None or args.lam is None:
        raise StageError("config", ValueError("--phi and --lambda are required"))
    est = _stage(
        "separability",
        separability_probability,
        args.items,
        args.components,
        args.phi,
        args.lam,
        args.runs,
        args.seed,
    )
    obj = {
        "prob": est.probability,
        "se": est.std_error,
        "bound": _finite_or_none(est.lower_bound),
        "runs": est.runs,
        "items": args.items,
        "components": args.components,
        "phi": args.phi,
        "lambda": args.lam,
        "seed": args.seed,
        "config": {
            "command": "separability",
            "items": args.items,
            "components": args.components,
            "phi": args.phi,
            "lambda": args.lam,
            "runs": args.runs,
            "seed": args.seed,
            "output": args.output,
        },
    }
    text = json.dumps(obj, indent=1)
    if args.output:
        _stage("write", atomic_write_text, args.output, text + "\n")
    print(text)
    return 0


def cmd_oracle(args) -> int:
    model = _build_model(args)
    table = _stage("oracle", brute_force_beta, model.components)
    I, J = pairs.pair_arrays(model.Q)
    obj = {
        "Q": model.Q,
        "K": model.K,
        "components": [
            {"ranking": list(c.reference.ranking), "phi": c.dispersion} for c in model.components
        ],
        "pairs": [[int(i), int(j)] for i, j in zip(I, J)],
        "beta": table.entries.tolist(),
        "config": {
            "command": "oracle",
            "items": model.Q,
            "components": model.K,
            "phi": [c.dispersion for c in model.components],
            "seed": args.seed,
            "input": args.input,
            "output": args.output,
        },
    }
    text = json.dumps(obj, indent=1)
    if args.output:
        _stage("write", atomic_write_text, args.output, text + "\n")
        print(f"wrote exact order-probability table for Q={model.Q}, K={model.K} to {args.output}")
    else:
        print(text)
    return 0


def cmd_predict(args) -> int:
    model = _stage("read", read_model, args.model)
    corpus = _stage("read", read_corpus, args.input)
    if corpus.Q != model.Q:
        raise StageError(
            "read", ValueError(f"corpus has Q={corpus.Q} but the model has Q={model.Q}")
        )
    B = model.observation_matrix()
    theta = _stage("weights", infer_weights, corpus, B)
    report = _stage("predict", predict_loglik, corpus, theta, B)
    obj = {
        "avg_loglik": report.avg_loglik,
        "zero_events": report.zero_events,
        "n": report.n,
        "users": corpus.M,
        "theta": theta.tolist(),
        "config": {
            "command": "predict",
            "model": args.model,
            "input": args.input,
            "output": args.output,
        },
    }
    text = json.dumps(obj, indent=1)
    if args.output:
        _stage("write", atomic_write_text, args.output, text + "\n")
    print(
        f"avg_loglik {report.avg_loglik:.6f} over {report.n} comparisons "
        f"({report.zero_events} zero-probability events)"
    )
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="mallowmix",
        description="Mixed-membership Mallows mixtures from pairwise-comparison corpora.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="sample a synthetic comparison corpus")
    g.add_argument("--items", type=int, help="number of items Q")
    g.add_argument("--components", type=int, help="number of mixture components K")
    g.add_argument("--users", type=int, required=True, help="number of users M")
    g.add_argument("--comparisons", type=int, required=True, help="comparisons per user N")
    g.add_argument("--phi", type=float, action="append",
                   help="dispersion; repeat for one value per component")
    g.add_argument("--alpha", type=float, default=None,
                   help="symmetric Dirichlet concentration (default 0.1)")
    g.add_argument("--vertex-prior", default=None,
                   help="comma-separated class probabilities for a vertex prior")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--threads", type=int, default=1)
    g.add_argument("-i", "--input", default=None, help="sample from an existing model file")
    g.add_argument("-o", "--output", required=True, help="corpus JSONL output path")
    g.add_argument("--truth", required=True, help="ground-truth model JSON output path")
    g.set_defaults(func=cmd_generate)

    e = sub.add_parser("estimate", help="estimate components from a corpus")
    e.add_argument("-i", "--input", default=None, help="corpus JSONL path")
    e.add_argument("-o", "--output", required=True, help="estimated model JSON output path")
    e.add_argument("--components", type=int, required=True, help="number of components K")
    e.add_argument("--projections", type=int, default=None,
                   help="random projection count (default 150 per component)")
    e.add_argument("--zeta", type=float, default=0.05, help="row separation tolerance")
    e.add_argument("--epsilon", type=float, default=1e-4, help="regression precision")
    e.add_argument("--doubled-distance-rule", action="store_true",
                   help="compare each row against doubled peers during detection")
    e.add_argument("--min-count-fraction", type=float, default=0.2,
                   help="exclude rows observed less than this fraction of the "
                        "median row count from detection candidacy (0 disables)")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--threads", type=int, default=1)
    e.add_argument("--exact-moments", default=None, metavar="TRUTH",
                   help="debug mode: use the analytic co-occurrence of this truth model file")
    e.set_defaults(func=cmd_estimate)

    v = sub.add_parser("evaluate", help="score an estimate against the truth")
    v.add_argument("--truth", required=True, help="ground-truth model JSON path")
    v.add_argument("-i", "--input", required=True, help="estimated model JSON path")
    v.add_argument("-o", "--output", default=None, help="report JSON output path")
    v.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("separability", help="Monte Carlo separability probability")
    s.add_argument("--items", type=int, required=True)
    s.add_argument("--components", type=int, required=True)
    s.add_argument("--phi", type=float, required=True, help="shared dispersion")
    s.add_argument("--lambda", dest="lam", type=float, required=True,
                   help="separability threshold in [0, 1)")
    s.add_argument("--runs", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("-o", "--output", default=None, help="report JSON output path")
    s.set_defaults(func=cmd_separability)

    o = sub.add_parser("oracle", help="exact order-probability table by full enumeration")
    o.add_argument("-i", "--input", default=None, help="model JSON path")
    o.add_argument("--items", type=int, help="number of items (7 at most)")
    o.add_argument("--components", type=int)
    o.add_argument("--phi", type=float, action="append")
    o.add_argument("--alpha", type=float, default=None, help=argparse.SUPPRESS)
    o.add_argument("--vertex-prior", default=None, help=argparse.SUPPRESS)
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("-o", "--output", default=None, help="table JSON output path")
    o.set_defaults(func=cmd_oracle)

    r = sub.add_parser("predict", help="score held-out comparisons under a model")
    r.add_argument("--model", required=True, help="model JSON path (truth or estimate)")
    r.add_argument("-i", "--input", required=True, help="corpus JSONL path")
    r.add_argument("-o", "--output", default=None, help="report JSON output path")
    r.set_defaults(func=cmd_predict)

    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except StageError as exc:
        print(f"error in {exc.stage} stage: {exc.cause}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - unexpected failures
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
