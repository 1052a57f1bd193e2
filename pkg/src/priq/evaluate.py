"""Evaluation protocol: logistic remapping, rank metrics, trial experiments.

A trial splits each manifest by reference group, generates preference
pairs on the training side, trains the kernel preference model, scores
the held-out images, remaps scores through a fitted 5-parameter logistic
curve, and reports SRCC/KRCC/PLCC.  Experiments repeat trials with
deterministically derived seeds and summarize medians.

The logistic remap absorbs scale and polarity differences between
predicted quality and subjective targets (a DMOS-style target fits a
decreasing curve), so all metrics are reported on remapped predictions.
"""

from __future__ import annotations

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit
from scipy.stats import kendalltau, rankdata

from ._errors import InfeasibleProtocolError, PriqError
from .corpus import Manifest, load_image, split_by_group
from .features import extract_all
from .mkl import MklConfig, mklgl_train
from .pairs import PrefPair, build_diffset, gen_pairs_from_scores
from .quality import score_batch

logger = logging.getLogger(__name__)

_MIN_REMAP_POINTS = 5
_MIN_METRIC_POINTS = 3
_MIN_BREAKDOWN_POINTS = 3


# ---------------------------------------------------------------------------
# Logistic remap
# ---------------------------------------------------------------------------

def _logistic_curve(beta, x):
    b1, b2, b3, b4, b5 = beta
    # 1/(1+exp(b2*(x-b3))) == expit(-b2*(x-b3)), overflow-safe.
    return b1 * (0.5 - expit(-b2 * (x - b3))) + b4 * x + b5


def logistic_remap(pred, target) -> np.ndarray:
    """Least-squares fit of the 5-parameter monotone-plus-linear curve

        L(x) = b1 * (1/2 - 1/(1 + exp(b2 (x - b3)))) + b4 x + b5

    to (pred, target) by Nelder-Mead from a moment-based start, with an
    ordinary-least-squares affine fallback (b1 = 0) whenever the affine fit
    has lower residual error.  Returns L(pred).
    """
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    target = np.asarray(target, dtype=np.float64).reshape(-1)
    if pred.shape != target.shape:
        raise ValueError("pred and target must have equal length")
    if pred.size < _MIN_REMAP_POINTS:
        raise ValueError(f"need at least {_MIN_REMAP_POINTS} points to fit the remap")
    if not (np.all(np.isfinite(pred)) and np.all(np.isfinite(target))):
        raise ValueError("non-finite values in remap inputs")
    if float(np.ptp(pred)) == 0.0:
        warnings.warn("constant predictions: logistic remap degenerate, "
                      "returning identity", UserWarning, stacklevel=2)
        return pred.copy()

    def sse(beta):
        r = _logistic_curve(beta, pred) - target
        return float(r @ r)

    beta0 = np.array([
        float(np.ptp(target)),
        1.0 / float(np.std(pred)),
        float(np.mean(pred)),
        0.0,
        float(np.mean(target)),
    ])
    opts = {"maxiter": 10_000, "maxfev": 10_000, "xatol": 1e-9, "fatol": 1e-12}
    best = minimize(sse, beta0, method="Nelder-Mead", options=opts)
    polish = minimize(sse, best.x, method="Nelder-Mead", options=opts)
    beta = polish.x if polish.fun <= best.fun else best.x

    # Affine fallback: b1 = 0 reduces the family to b4*x + b5, whose optimum
    # is closed-form.  Taking the better of the two keeps the fitted curve at
    # least as good as any affine map, the identity included.
    A = np.stack([pred, np.ones_like(pred)], axis=1)
    coef, *_ = np.linalg.lstsq(A, target, rcond=None)
    affine = np.array([0.0, 1.0, 1.0, coef[0], coef[1]])
    if sse(affine) < sse(beta):
        beta = affine
    return _logistic_curve(beta, pred)


# ---------------------------------------------------------------------------
# Correlation metrics
# ---------------------------------------------------------------------------

def _metric_inputs(a, b, name: str) -> tuple[np.ndarray, np.ndarray] | None:
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise ValueError(f"{name}: input lengths differ")
    if a.size < _MIN_METRIC_POINTS:
        raise ValueError(f"{name}: need at least {_MIN_METRIC_POINTS} points")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError(f"{name}: non-finite input")
    if float(np.ptp(a)) == 0.0 or float(np.ptp(b)) == 0.0:
        warnings.warn(f"{name}: constant input, returning 0",
                      UserWarning, stacklevel=3)
        return None
    return a, b


def plcc(a, b) -> float:
    """Pearson linear correlation; 0 (with a warning) on constant input."""
    ab = _metric_inputs(a, b, "plcc")
    if ab is None:
        return 0.0
    return float(np.corrcoef(ab[0], ab[1])[0, 1])


def srcc(a, b) -> float:
    """Spearman rank correlation: Pearson on average-tie ranks."""
    ab = _metric_inputs(a, b, "srcc")
    if ab is None:
        return 0.0
    ra = rankdata(ab[0])
    rb = rankdata(ab[1])
    if float(np.ptp(ra)) == 0.0 or float(np.ptp(rb)) == 0.0:
        warnings.warn("srcc: constant ranks, returning 0", UserWarning, stacklevel=2)
        return 0.0
    return float(np.corrcoef(ra, rb)[0, 1])


def krcc(a, b) -> float:
    """Kendall rank correlation, tie-corrected (tau-b)."""
    ab = _metric_inputs(a, b, "krcc")
    if ab is None:
        return 0.0
    tau = kendalltau(ab[0], ab[1]).statistic
    if not np.isfinite(tau):
        warnings.warn("krcc: degenerate input, returning 0", UserWarning, stacklevel=2)
        return 0.0
    return float(tau)


# ---------------------------------------------------------------------------
# Experiment protocol
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Protocol:
    """Experiment settings; T, N, n_train_groups broadcast per manifest."""

    n_train_groups: int | Sequence[int]
    T: float | Sequence[float]
    N: int | Sequence[int]
    trials: int = 100
    C: float = 1.0
    p: float = 1.0


@dataclass(frozen=True)
class TrialResult:
    """Metrics of one completed train/test trial."""

    trial_index: int
    seed: int
    srcc: float
    krcc: float
    plcc: float
    n_test: int
    breakdown: Mapping[str, float]


@dataclass(frozen=True)
class TrialFailure:
    """A trial that raised: recorded and excluded from medians."""

    trial_index: int
    category: str
    message: str


@dataclass(frozen=True)
class ExperimentSummary:
    """Medians over completed trials plus the per-trial records."""

    srcc_median: float
    krcc_median: float
    plcc_median: float
    srcc_std: float
    n_trials: int
    n_failed: int
    feasible: bool
    trials: tuple[TrialResult, ...]
    failures: tuple[TrialFailure, ...]


def _broadcast(value, count: int, name: str, cast) -> tuple:
    if np.isscalar(value):
        return tuple(cast(value) for _ in range(count))
    out = tuple(cast(v) for v in value)
    if len(out) != count:
        raise ValueError(f"{name}: expected {count} values, got {len(out)}")
    return out


def check_score_span(manifest: Manifest, minimum: float = 0.8) -> float:
    """Fraction of the declared score range covered by a training manifest.

    The gain-to-score map assumes training images cover the full quality
    range; a span under ``minimum`` of the declared range is logged as a
    warning.  Returns the fraction.
    """
    declared = manifest.score_max - manifest.score_min
    if declared <= 0 or not manifest.images:
        return 0.0
    scores = manifest.scores()
    frac = float((scores.max() - scores.min()) / declared)
    if frac < minimum:
        logger.warning(
            "training scores of %r span only %.0f%% of the declared range; "
            "the gain-to-score map assumes full coverage",
            manifest.name, 100.0 * frac,
        )
    return frac


def manifest_features(manifest: Manifest, root, threads: int = 1) -> dict[int, np.ndarray]:
    """Extract the 84-dim feature vector for every image in a manifest.

    ``root`` is the directory image paths are relative to (the manifest
    file's directory).  Returns id -> feature row; deterministic and
    order-independent under threading.
    """
    paths = [Path(root) / im.path for im in manifest.images]
    if threads <= 1:
        rows = [extract_all(load_image(p)) for p in paths]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(lambda p: extract_all(load_image(p)), paths))
    return {im.id: row for im, row in zip(manifest.images, rows)}


def _trial_metrics(pred: np.ndarray, target: np.ndarray,
                   tags: Sequence[str]) -> tuple[float, float, float, dict[str, float]]:
    remapped = logistic_remap(pred, target)
    s = srcc(remapped, target)
    k = krcc(remapped, target)
    pl = plcc(remapped, target)
    breakdown: dict[str, float] = {}
    tags_arr = np.asarray(tags)
    for tag in sorted(set(tags)):
        mask = tags_arr == tag
        if int(mask.sum()) < _MIN_BREAKDOWN_POINTS:
            continue
        sub_t = target[mask]
        if float(np.ptp(sub_t)) == 0.0:
            continue
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            breakdown[tag] = srcc(remapped[mask], sub_t)
    return s, k, pl, breakdown


def _run_one_trial(manifests, feats, ngs, Ts, Ns, mkl_cfg, seed, t) -> TrialResult:
    global_pairs: list[PrefPair] = []
    global_feats: dict[int, np.ndarray] = {}
    train_ids: list[int] = []
    test_ids: list[int] = []
    test_rows: list[np.ndarray] = []
    test_targets: list[float] = []
    test_tags: list[str] = []
    offset = 0
    for mi, man in enumerate(manifests):
        split_seed = np.random.SeedSequence((seed, t, mi, 0))
        pair_seed = np.random.SeedSequence((seed, t, mi, 1))
        train_man, test_man = split_by_group(man, ngs[mi], split_seed)
        check_score_span(train_man)
        prs = gen_pairs_from_scores(train_man, Ts[mi], Ns[mi], pair_seed)
        for pr in prs:
            global_pairs.append(PrefPair(pr.i + offset, pr.j + offset, pr.y))
        for im in train_man.images:
            gid = im.id + offset
            global_feats[gid] = feats[mi][im.id]
            train_ids.append(gid)
        for im in test_man.images:
            test_ids.append(im.id + offset)
            test_rows.append(feats[mi][im.id])
            test_targets.append(im.score)
            test_tags.append(im.distortion_tag)
        offset += max(im.id for im in man.images) + 1

    ds = build_diffset(global_pairs, global_feats)
    model = mklgl_train(ds, mkl_cfg)
    model = model.with_training_table(
        np.asarray(train_ids, dtype=np.int64),
        np.stack([global_feats[i] for i in train_ids]),
    )
    reports = score_batch(model, np.stack(test_rows), test_ids)
    pred = np.array([r.score for r in reports])
    target = np.asarray(test_targets, dtype=np.float64)
    s, k, pl, breakdown = _trial_metrics(pred, target, test_tags)
    for v in (s, k, pl):
        if not np.isfinite(v):
            raise ValueError(f"non-finite trial metric: {v}")
    return TrialResult(
        trial_index=t, seed=seed, srcc=s, krcc=k, plcc=pl,
        n_test=len(test_ids), breakdown=breakdown,
    )


def _summarize(completed: list[TrialResult], failures: list[TrialFailure]) -> ExperimentSummary:
    if completed:
        s_vals = np.array([r.srcc for r in completed])
        k_vals = np.array([r.krcc for r in completed])
        p_vals = np.array([r.plcc for r in completed])
        srcc_std = float(np.std(s_vals, ddof=1)) if len(completed) >= 2 else 0.0
        return ExperimentSummary(
            srcc_median=float(np.median(s_vals)),
            krcc_median=float(np.median(k_vals)),
            plcc_median=float(np.median(p_vals)),
            srcc_std=srcc_std,
            n_trials=len(completed),
            n_failed=len(failures),
            feasible=True,
            trials=tuple(completed),
            failures=tuple(failures),
        )
    nan = float("nan")
    return ExperimentSummary(
        srcc_median=nan, krcc_median=nan, plcc_median=nan, srcc_std=nan,
        n_trials=0, n_failed=len(failures), feasible=False,
        trials=(), failures=tuple(failures),
    )


def run_trials(
    manifests: Sequence[Manifest],
    protocol: Protocol,
    seed: int,
    *,
    features: Sequence[Mapping[int, np.ndarray]] | None = None,
    roots: Sequence | None = None,
    threads: int = 1,
) -> ExperimentSummary:
    """Run the repeated split/train/score/metrics protocol.

    Pair sets from all manifests are concatenated into one training set
    with no score realignment; test images from all manifests are pooled
    for the remap and metrics.  Per-trial seeds derive from
    (seed, trial, manifest, stage) so every trial is reproducible in
    isolation and results are independent of execution order.

    ``features`` (one id -> row mapping per manifest) skips image loading;
    otherwise ``roots`` must give each manifest's image directory.
    """
    manifests = list(manifests)
    if not manifests:
        raise ValueError("no manifests given")
    if protocol.trials < 1:
        raise ValueError("protocol.trials must be >= 1")
    n_m = len(manifests)
    ngs = _broadcast(protocol.n_train_groups, n_m, "n_train_groups", int)
    Ts = _broadcast(protocol.T, n_m, "T", float)
    Ns = _broadcast(protocol.N, n_m, "N", int)
    for mi, man in enumerate(manifests):
        n_groups = len(man.group_ids())
        if not (1 <= ngs[mi] < n_groups):
            raise InfeasibleProtocolError(
                f"manifest {man.name!r} has {n_groups} groups; cannot hold out "
                f"a test set with n_train_groups={ngs[mi]}"
            )

    if features is None:
        if roots is None:
            raise ValueError("need either precomputed features or manifest roots")
        features = [manifest_features(man, root, threads=threads)
                    for man, root in zip(manifests, roots)]
    else:
        features = list(features)
        if len(features) != n_m:
            raise ValueError("features list does not match manifests")
        for man, fmap in zip(manifests, features):
            missing = [im.id for im in man.images if im.id not in fmap]
            if missing:
                raise ValueError(
                    f"manifest {man.name!r}: missing features for ids {missing[:5]}"
                )

    mkl_cfg = MklConfig(C=protocol.C, p=protocol.p)
    completed: list[TrialResult] = []
    failures: list[TrialFailure] = []
    for t in range(protocol.trials):
        try:
            result = _run_one_trial(manifests, features, ngs, Ts, Ns, mkl_cfg, seed, t)
        except (PriqError, ValueError) as exc:
            category = getattr(exc, "category", type(exc).__name__)
            failures.append(TrialFailure(t, str(category), str(exc)))
            logger.warning("trial %d failed [%s]: %s", t, category, exc)
            continue
        completed.append(result)
        logger.info(
            "trial %d: srcc=%.4f krcc=%.4f plcc=%.4f (n_test=%d)",
            t, result.srcc, result.krcc, result.plcc, result.n_test,
        )
    return _summarize(completed, failures)


def threshold_sweep(
    manifest: Manifest,
    protocol: Protocol,
    T_grid: Sequence[float],
    seed: int,
    *,
    features: Mapping[int, np.ndarray] | None = None,
    root=None,
    threads: int = 1,
) -> dict[float, ExperimentSummary]:
    """run_trials per threshold in ``T_grid``.

    Split seeds depend only on (seed, trial, manifest), not on T, so every
    threshold sees identical train/test splits per trial index.  A T whose
    trials all fail (no eligible pairs) yields a summary marked infeasible.
    """
    if len(T_grid) == 0:
        raise ValueError("empty threshold grid")
    if features is None:
        if root is None:
            raise ValueError("need either precomputed features or a manifest root")
        features = manifest_features(manifest, root, threads=threads)
    out: dict[float, ExperimentSummary] = {}
    for T in T_grid:
        summary = run_trials(
            [manifest], replace(protocol, T=float(T)), seed, features=[features],
        )
        if not summary.feasible:
            logger.warning("threshold %g infeasible: all %d trials failed",
                           T, summary.n_failed)
        out[float(T)] = summary
    return out
