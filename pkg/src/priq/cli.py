"""Command-line pipeline.

Stages hand off through files so each is independently runnable and
cacheable: ``synth`` writes a corpus, ``extract`` a feature cache,
``pairs`` a preference-pair CSV, ``train`` a model file, ``score`` a
score CSV; ``eval`` compares scores against a manifest and
``experiment`` runs the repeated-trial protocol.

Every command echoes its effective configuration (defaults included) as
one ``config: {...}`` JSON line on stdout and reports failures as one
``error[<category>]: message`` line on stderr with a nonzero exit.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import corpus, evaluate, quality
from . import features as feature_mod
from . import mkl
from . import pairs as pairs_mod
from ._errors import PriqError

logger = logging.getLogger(__name__)

_LOG_LEVELS = ("debug", "info", "warning", "error")


class _Parser(argparse.ArgumentParser):
    """Argument parser with single-line machine-parsable usage errors."""

    def error(self, message):
        sys.stderr.write(f"error[usage]: {message}\n")
        raise SystemExit(2)


def _resolve_threads(value: int | None) -> int:
    if value is not None:
        if value < 1:
            raise ValueError("--threads must be >= 1")
        return value
    env = os.environ.get("PRIQ_THREADS", "").strip()
    if env:
        threads = int(env)
        if threads < 1:
            raise ValueError("PRIQ_THREADS must be >= 1")
        return threads
    return os.cpu_count() or 1


def _echo_config(command: str, params: dict) -> None:
    doc = {"command": command}
    for key, value in params.items():
        if isinstance(value, Path):
            value = str(value)
        doc[key] = value
    print(f"config: {json.dumps(doc, sort_keys=True)}")


def _load_feature_map(path) -> dict[int, np.ndarray]:
    ids, rows = feature_mod.read_feature_cache(path)
    return {int(i): row for i, row in zip(ids, rows)}


def _features_for(manifest, manifest_path, cache_path, threads) -> dict[int, np.ndarray]:
    if cache_path is not None:
        feats = _load_feature_map(cache_path)
        missing = [im.id for im in manifest.images if im.id not in feats]
        if missing:
            raise ValueError(
                f"feature cache {cache_path} missing ids {missing[:5]} "
                f"of manifest {manifest.name!r}"
            )
        return feats
    return evaluate.manifest_features(
        manifest, Path(manifest_path).parent, threads=threads
    )


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    config = corpus.SynthConfig(
        out_dir=args.out,
        n_refs=args.refs,
        width=args.width,
        height=args.height,
        distortions=tuple(args.distortions.split(",")),
        n_levels=args.levels,
        mse_cap=args.mse_cap,
        name=args.name,
    )
    _echo_config("synth", {**dataclasses.asdict(config), "seed": args.seed})
    manifest = corpus.synth_corpus(config, args.seed)
    print(f"wrote {len(manifest.images)} images; "
          f"manifest: {Path(args.out) / 'manifest.csv'}")
    return 0


def cmd_extract(args) -> int:
    threads = _resolve_threads(args.threads)
    _echo_config("extract", {"manifest": args.manifest, "out": args.out,
                             "threads": threads})
    manifest = corpus.load_manifest(args.manifest)
    feats = evaluate.manifest_features(
        manifest, Path(args.manifest).parent, threads=threads
    )
    ids = [im.id for im in manifest.images]
    feature_mod.write_feature_cache(args.out, ids, np.stack([feats[i] for i in ids]))
    print(f"extracted {len(ids)} feature vectors -> {args.out}")
    return 0


def _pairs_from_votes(manifest, votes_path) -> list[pairs_mod.PrefPair]:
    known = set(int(i) for i in manifest.ids())
    votes: dict[tuple[int, int], list[int]] = {}
    with open(votes_path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "i,j,vote":
            raise ValueError(f"bad votes header in {votes_path}: {header!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise ValueError(f"{votes_path}:{lineno}: expected i,j,vote")
            i, j, v = int(parts[0]), int(parts[1]), int(parts[2])
            if i not in known or j not in known:
                raise ValueError(f"{votes_path}:{lineno}: unknown image id")
            votes.setdefault((i, j), []).append(v)
    out = []
    for (i, j), vs in votes.items():
        y = pairs_mod.aggregate_votes(vs)
        if y != 0:
            out.append(pairs_mod.PrefPair(i, j, y))
    return out


def cmd_pairs(args) -> int:
    if args.votes is None and (args.threshold is None or args.count is None):
        raise ValueError("need either --votes or both --threshold and --count")
    manifest = corpus.load_manifest(args.manifest)
    if args.votes is not None:
        _echo_config("pairs", {"manifest": args.manifest, "votes": args.votes,
                               "out": args.out})
        prs = _pairs_from_votes(manifest, args.votes)
        header = {"manifest": manifest.name, "source": "votes"}
    else:
        _echo_config("pairs", {
            "manifest": args.manifest, "threshold": args.threshold,
            "count": args.count, "seed": args.seed, "out": args.out,
        })
        prs = pairs_mod.gen_pairs_from_scores(
            manifest, args.threshold, args.count, args.seed
        )
        header = {
            "manifest": manifest.name, "threshold": args.threshold,
            "count": args.count, "seed": args.seed,
        }
    pairs_mod.save_pairs(args.out, prs, header)
    print(f"wrote {len(prs)} pairs -> {args.out}")
    return 0


def cmd_train(args) -> int:
    threads = _resolve_threads(args.threads)
    config = mkl.MklConfig(
        C=args.C, p=args.p, outer_tol=args.outer_tol, max_outer=args.max_outer
    )
    _echo_config("train", {
        "manifest": args.manifest, "features": args.features, "pairs": args.pairs,
        "out": args.out, **dataclasses.asdict(config), "threads": threads,
    })
    manifest = corpus.load_manifest(args.manifest)
    feats = _features_for(manifest, args.manifest, args.features, threads)
    prs = pairs_mod.load_pairs(args.pairs)
    ds = pairs_mod.build_diffset(prs, feats)
    model = mkl.mklgl_train(ds, config)
    span = evaluate.check_score_span(manifest)
    ids = [im.id for im in manifest.images]
    model = model.with_training_table(ids, np.stack([feats[i] for i in ids]))
    model = dataclasses.replace(model, config={
        **model.config,
        "manifest": manifest.name,
        "score_span_fraction": span,
        "score_span_ok": span >= 0.8,
    })
    mkl.save_model(model, args.out)
    print(f"trained on {len(prs)} pairs; {model.alpha.size} support rows; "
          f"model -> {args.out}")
    return 0


def cmd_score(args) -> int:
    threads = _resolve_threads(args.threads)
    _echo_config("score", {
        "model": args.model, "manifest": args.manifest,
        "features": args.features, "out": args.out, "threads": threads,
    })
    model = mkl.load_model(args.model)
    manifest = corpus.load_manifest(args.manifest)
    feats = _features_for(manifest, args.manifest, args.features, threads)
    ids = [im.id for im in manifest.images]
    reports = quality.score_batch(model, np.stack([feats[i] for i in ids]), ids)
    quality.save_scores(reports, args.out, model_path=args.model,
                        manifest_name=manifest.name)
    print(f"scored {len(reports)} images -> {args.out}")
    return 0


def cmd_eval(args) -> int:
    _echo_config("eval", {"manifest": args.manifest, "scores": args.scores})
    manifest = corpus.load_manifest(args.manifest)
    reports = quality.load_scores(args.scores)
    by_id = {im.id: im.score for im in manifest.images}
    unknown = [r.image_id for r in reports if r.image_id not in by_id]
    if unknown:
        raise ValueError(f"score file references unknown image ids {unknown[:5]}")
    pred = np.array([r.score for r in reports])
    target = np.array([by_id[r.image_id] for r in reports])
    remapped = evaluate.logistic_remap(pred, target)
    s = evaluate.srcc(remapped, target)
    k = evaluate.krcc(remapped, target)
    pl = evaluate.plcc(remapped, target)
    print(f"n={len(reports)} srcc={s:.4f} krcc={k:.4f} plcc={pl:.4f}")
    return 0


def _summary_doc(T: float | None, summary: evaluate.ExperimentSummary) -> dict:
    doc = {
        "srcc_median": summary.srcc_median,
        "krcc_median": summary.krcc_median,
        "plcc_median": summary.plcc_median,
        "srcc_std": summary.srcc_std,
        "n_trials": summary.n_trials,
        "n_failed": summary.n_failed,
        "feasible": summary.feasible,
        "trials": [dataclasses.asdict(t) for t in summary.trials],
        "failures": [dataclasses.asdict(f) for f in summary.failures],
    }
    if T is not None:
        doc["T"] = T
    return doc


def _print_summary(label: str, summary: evaluate.ExperimentSummary) -> None:
    if not summary.feasible:
        print(f"{label}: infeasible ({summary.n_failed} trials failed)")
        return
    print(
        f"{label}: median srcc={summary.srcc_median:.4f} "
        f"krcc={summary.krcc_median:.4f} plcc={summary.plcc_median:.4f} "
        f"srcc_std={summary.srcc_std:.4f} "
        f"trials={summary.n_trials}/{summary.n_trials + summary.n_failed}"
    )


def cmd_experiment(args) -> int:
    threads = _resolve_threads(args.threads)
    thresholds = args.threshold if args.threshold else [0.0]
    config = {
        "manifests": list(args.manifest), "groups": args.groups,
        "pairs": args.pairs, "thresholds": thresholds, "trials": args.trials,
        "C": args.C, "p": args.p, "seed": args.seed, "sweep": args.sweep,
        "out": args.out, "threads": threads,
    }
    _echo_config("experiment", config)
    manifests = [corpus.load_manifest(p) for p in args.manifest]
    features = [
        evaluate.manifest_features(man, Path(p).parent, threads=threads)
        for man, p in zip(manifests, args.manifest)
    ]
    protocol = evaluate.Protocol(
        n_train_groups=args.groups,
        T=thresholds[0] if len(thresholds) == 1 else tuple(thresholds),
        N=args.pairs,
        trials=args.trials,
        C=args.C,
        p=args.p,
    )

    docs = []
    if args.sweep:
        if len(manifests) != 1:
            raise ValueError("--sweep supports exactly one manifest")
        sweep = evaluate.threshold_sweep(
            manifests[0], protocol, thresholds, args.seed, features=features[0],
        )
        for T, summary in sweep.items():
            _print_summary(f"T={T:g}", summary)
            docs.append(_summary_doc(T, summary))
    else:
        summary = evaluate.run_trials(
            manifests, protocol, args.seed, features=features
        )
        _print_summary("experiment", summary)
        docs.append(_summary_doc(None, summary))

    if args.out is not None:
        Path(args.out).write_text(
            json.dumps({"config": config, "results": docs}, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        print(f"results -> {args.out}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _build_parser() -> _Parser:
    common = _Parser(add_help=False)
    common.add_argument("--log-level", choices=_LOG_LEVELS, default="warning",
                        help="stderr logging verbosity")
    common.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: PRIQ_THREADS or CPU count)")

    parser = _Parser(prog="priq",
                     description="Pairwise-preference blind image quality pipeline")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", parents=[common],
                       help="generate the synthetic scored corpus")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--refs", type=int, default=12)
    p.add_argument("--width", type=int, default=160)
    p.add_argument("--height", type=int, default=160)
    p.add_argument("--levels", type=int, default=5)
    p.add_argument("--distortions", default=",".join(corpus.DISTORTIONS))
    p.add_argument("--mse-cap", type=float, default=2000.0)
    p.add_argument("--name", default="synth")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("extract", parents=[common],
                       help="extract features for every manifest image")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="feature cache file")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("pairs", parents=[common],
                       help="generate preference pairs from scores or votes")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="pair CSV file")
    p.add_argument("--threshold", type=float, default=None,
                   help="minimum score difference for an eligible pair")
    p.add_argument("--count", type=int, default=None, help="pairs to sample")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--votes", default=None,
                   help="CSV of i,j,vote rows to aggregate instead of sampling")
    p.set_defaults(func=cmd_pairs)

    p = sub.add_parser("train", parents=[common],
                       help="train a preference model from pairs")
    p.add_argument("--manifest", required=True, help="training manifest")
    p.add_argument("--features", default=None,
                   help="feature cache (extracted on the fly if omitted)")
    p.add_argument("--pairs", required=True)
    p.add_argument("--out", required=True, help="model file")
    p.add_argument("--C", type=float, default=1.0)
    p.add_argument("--p", type=float, default=1.0)
    p.add_argument("--outer-tol", type=float, default=1e-3)
    p.add_argument("--max-outer", type=int, default=12)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", parents=[common],
                       help="score manifest images with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--features", default=None,
                   help="feature cache (extracted on the fly if omitted)")
    p.add_argument("--out", required=True, help="score CSV file")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval", parents=[common],
                       help="metrics between a score CSV and manifest scores")
    p.add_argument("--manifest", required=True)
    p.add_argument("--scores", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("experiment", parents=[common],
                       help="repeated split/train/score trials with medians")
    p.add_argument("--manifest", action="append", required=True,
                   help="manifest CSV (repeat for hybrid training)")
    p.add_argument("--groups", type=int, default=8,
                   help="training groups per manifest")
    p.add_argument("--pairs", type=int, default=1500,
                   help="preference pairs per manifest")
    p.add_argument("--threshold", type=float, action="append", default=None,
                   help="score-difference threshold; repeat with --sweep for a grid")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--C", type=float, default=1.0)
    p.add_argument("--p", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sweep", action="store_true",
                   help="treat repeated --threshold values as a sweep grid")
    p.add_argument("--out", default=None, help="machine-readable results JSON")
    p.set_defaults(func=cmd_experiment)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=getattr(logging, args.log_level.upper()),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except PriqError as exc:
        sys.stderr.write(f"error[{exc.category}]: {exc}\n")
        return 1
    except FileNotFoundError as exc:
        sys.stderr.write(f"error[missing-file]: {exc}\n")
        return 1
    except (ValueError, OSError) as exc:
        sys.stderr.write(f"error[invalid-argument]: {exc}\n")
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
