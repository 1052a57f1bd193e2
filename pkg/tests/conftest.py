"""Shared helpers for the test suite."""

import numpy as np

from priq.corpus import Manifest, ScoredImage
from priq.features import FEATURE_DIM
from priq.pairs import DiffSet


def planted_diffset(rng, lo, hi, n_pairs, noise=0.05):
    """Mirror-closed difference set whose labels depend only on dims [lo, hi)."""
    top = noise * rng.standard_normal((n_pairs, FEATURE_DIM))
    u = rng.uniform(0.5, 2.0, n_pairs) * rng.choice([-1.0, 1.0], n_pairs)
    w = rng.standard_normal(hi - lo)
    w /= np.linalg.norm(w)
    top[:, lo:hi] += u[:, None] * w
    y_top = np.where(u > 0.0, 1.0, -1.0)
    X = np.vstack([top, -top])
    Y = np.concatenate([y_top, -y_top])
    index = tuple((k, 1) for k in range(n_pairs)) + tuple((k, -1) for k in range(n_pairs))
    return DiffSet(X=X, Y=Y, pair_index=index)


def random_svm_problem(rng, n_max=50):
    """A random PSD Gram with a small ridge plus balanced-enough labels."""
    n = int(rng.integers(10, n_max + 1))
    A = rng.standard_normal((n, 8))
    D = ((A[:, None, :] - A[None, :, :]) ** 2).sum(-1)
    K = np.exp(-D / 16.0) + 1e-2 * np.eye(n)
    y = rng.choice([-1.0, 1.0], n)
    if abs(y.sum()) == n:
        y[0] = -y[0]
    return K, y


def project_box_hyperplane(v, y, C, iters=44):
    """Euclidean projection onto {0 <= a <= C, y.a = 0} by bisection on the
    hyperplane multiplier."""
    lo, hi = -1e6, 1e6
    for _ in range(iters):
        lam = 0.5 * (lo + hi)
        if float(y @ np.clip(v - lam * y, 0.0, C)) > 0.0:
            lo = lam
        else:
            hi = lam
    return np.clip(v - 0.5 * (lo + hi) * y, 0.0, C)


def qp_oracle(K, y, C, iters=2000):
    """Accelerated projected-gradient ascent on the SVM dual."""
    n = len(y)
    H = np.outer(y, y) * K
    step = 1.0 / (float(np.linalg.eigvalsh(H)[-1]) + 1e-12)
    a = project_box_hyperplane(np.zeros(n), y, C)
    z = a.copy()
    tprev = 1.0
    for _ in range(iters):
        grad = 1.0 - H @ z
        a_new = project_box_hyperplane(z + step * grad, y, C)
        tcur = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * tprev * tprev))
        z = a_new + ((tprev - 1.0) / tcur) * (a_new - a)
        a, tprev = a_new, tcur
    return a


def ggd_samples(rng, shape, scale, n):
    """Draw from a zero-mean GGD: |x| = scale * G**(1/shape), G ~ Gamma(1/shape)."""
    mag = scale * rng.gamma(1.0 / shape, 1.0, size=n) ** (1.0 / shape)
    return mag * rng.choice([-1.0, 1.0], size=n)


def average_ranks(x):
    """Average ranks with ties sharing the mean of their positions."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="stable")
    ranks = np.empty(x.size)
    sorted_x = x[order]
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and sorted_x[j + 1] == sorted_x[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def pearson_oracle(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    a = a - a.mean()
    b = b - b.mean()
    return float((a @ b) / np.sqrt((a @ a) * (b @ b)))


def srcc_oracle(a, b):
    return pearson_oracle(average_ranks(a), average_ranks(b))


def taub_oracle(a, b):
    """O(n^2) tie-corrected Kendall correlation."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n = a.size
    con = dis = tie_a = tie_b = 0
    for i in range(n):
        for j in range(i + 1, n):
            sa = np.sign(a[i] - a[j])
            sb = np.sign(b[i] - b[j])
            if sa == 0.0:
                tie_a += 1
            if sb == 0.0:
                tie_b += 1
            if sa * sb > 0.0:
                con += 1
            elif sa * sb < 0.0:
                dis += 1
    n0 = n * (n - 1) // 2
    denom = np.sqrt(float(n0 - tie_a) * float(n0 - tie_b))
    return (con - dis) / denom


def linear_manifest(rng, n_groups=6, per_group=8, polarity="MOS", name="toy"):
    """In-memory manifest plus a feature map where dims 60:68 track the score.

    Scores are uniform on [0, 100]; every other feature dimension is noise,
    so a trained model can rank the images from the planted dimensions.
    """
    images = []
    features = {}
    next_id = 0
    for g in range(n_groups):
        for k in range(per_group):
            score = float(rng.uniform(0.0, 100.0))
            tag = "ref" if k == 0 else ("wn" if k % 2 else "gblur")
            level = 0 if k == 0 else (k % 4) + 1
            if k == 0:
                score = float(rng.uniform(80.0, 100.0)) if polarity == "MOS" else score
            images.append(
                ScoredImage(
                    id=next_id,
                    path=f"img_{next_id:04d}.png",
                    group_id=g,
                    distortion_tag=tag,
                    level=level,
                    score=score,
                    polarity=polarity,
                )
            )
            f = 0.1 * rng.standard_normal(FEATURE_DIM)
            f[60:68] += score / 50.0 - 1.0 + 0.02 * rng.standard_normal(8)
            features[next_id] = f
            next_id += 1
    manifest = Manifest(
        images=tuple(images), score_min=0.0, score_max=100.0, name=name
    )
    return manifest, features
