"""Multiple kernel learning over the 45-kernel Gaussian bank.

Training alternates an SMO-style SVM dual solve on the combined Gram with a
closed-form group-lasso update of the kernel weights.  The bank holds one
Gaussian kernel per (feature group, bandwidth) plus five full-vector
kernels; bandwidths only rescale exponents of the per-group squared
distances, so the bank is derived once per row set and every combined-Gram
refresh is a weighted sum.

The training set is mirror-closed (every difference vector appears with its
negation and the opposite label), the bias is fixed at 0, and the dual
coefficients of mirrored rows are averaged after each solve, which makes
the decision function antisymmetric: f(-x) = -f(x).
"""

from __future__ import annotations

import json
import struct
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ._errors import ManifestError
from .features import FEATURE_DIM, GROUP_SLICES

SIGMAS = (0.25, 0.5, 1.0, 2.0, 4.0)
FULL_GROUP = "full"

_SV_KEEP_THRESHOLD = 1e-8
_THETA_ZERO = 1e-12
# Row count from which kernel matrices are cached in float32 (memory), with
# all accumulations still performed in float64.
_F32_BANK_ROWS = 1024

_MODEL_MAGIC = b"PRIQM1"
_MODEL_VERSION = 1


class ConvergenceWarning(UserWarning):
    """Raised (as a warning) when the SMO solver hits its iteration cap."""


@dataclass(frozen=True)
class KernelSpec:
    """One Gaussian kernel: a feature-group selector and a bandwidth."""

    group: str
    sigma: float


def _group_bounds(layout) -> dict[str, tuple[int, int]]:
    layout = tuple(layout)
    if len(layout) != 8:
        raise ValueError(f"layout must have exactly 8 groups, got {len(layout)}")
    bounds: dict[str, tuple[int, int]] = {}
    cursor = 0
    for name, start, stop in layout:
        if name in bounds or name == FULL_GROUP:
            raise ValueError(f"duplicate or reserved group name {name!r}")
        if start != cursor or stop <= start:
            raise ValueError(f"layout not contiguous at group {name!r}")
        bounds[name] = (start, stop)
        cursor = stop
    if cursor != FEATURE_DIM:
        raise ValueError(f"layout covers {cursor} dims, expected {FEATURE_DIM}")
    bounds[FULL_GROUP] = (0, FEATURE_DIM)
    return bounds


def build_kernel_bank(layout=GROUP_SLICES) -> list[KernelSpec]:
    """The 45 kernel specs in canonical order.

    Groups in layout order then the full vector, bandwidths ascending
    within each group.
    """
    bounds = _group_bounds(layout)
    names = [name for name, _, _ in layout] + [FULL_GROUP]
    del bounds  # validation only
    return [KernelSpec(group=n, sigma=s) for n in names for s in SIGMAS]


def kernel_eval(spec: KernelSpec, x, z, layout=GROUP_SLICES) -> float:
    """K = exp(-||x_g - z_g||^2 / (2 sigma^2 d_g)) on standardized inputs."""
    a, b = _group_bounds(layout)[spec.group]
    dx = np.asarray(x, dtype=np.float64)[a:b] - np.asarray(z, dtype=np.float64)[a:b]
    d = b - a
    return float(np.exp(-float(dx @ dx) / (2.0 * spec.sigma**2 * d)))


# ---------------------------------------------------------------------------
# Gram machinery
# ---------------------------------------------------------------------------

def _pairwise_sq_dists(A: np.ndarray, B: np.ndarray | None = None) -> np.ndarray:
    """Squared Euclidean distances; symmetric with exact-zero diagonal when
    B is None (self-distances)."""
    sa = np.einsum("ij,ij->i", A, A)
    if B is None:
        D = sa[:, None] + sa[None, :] - 2.0 * (A @ A.T)
        np.maximum(D, 0.0, out=D)
        D = 0.5 * (D + D.T)
        np.fill_diagonal(D, 0.0)
        return D
    sb = np.einsum("ij,ij->i", B, B)
    D = sa[:, None] + sb[None, :] - 2.0 * (A @ B.T)
    np.maximum(D, 0.0, out=D)
    return D


def _kernels_descending(D: np.ndarray, d: int, dtype):
    """Yield (sigma_index, K) for sigma = 4, 2, 1, 0.5, 0.25.

    Consecutive bandwidths differ by a factor-4 exponent rescale, so each
    step is two in-place squarings of the previous matrix instead of a
    fresh exp().  The yielded buffer is reused; copy to keep.
    """
    d_base = D.astype(dtype, copy=False)
    c4 = 1.0 / (2.0 * SIGMAS[-1] ** 2 * d)
    K = np.exp(d_base * dtype(-c4)) if dtype == np.float32 else np.exp(-c4 * d_base)
    for s_idx in (4, 3, 2, 1, 0):
        yield s_idx, K
        if s_idx > 0:
            np.multiply(K, K, out=K)
            np.multiply(K, K, out=K)


class _GramBank:
    """The 45 kernel matrices for one standardized row set.

    Derived from the per-group squared-distance matrices (8 groups plus
    their sum for the full vector); cached so every combined-Gram refresh
    during the alternation is a weighted sum.
    """

    def __init__(self, Xs: np.ndarray, layout=GROUP_SLICES, dtype=None):
        n = Xs.shape[0]
        if dtype is None:
            dtype = np.float32 if n >= _F32_BANK_ROWS else np.float64
        self.n = n
        self.dtype = dtype
        self.specs = build_kernel_bank(layout)
        matrices: list[np.ndarray | None] = [None] * len(self.specs)
        full_D = np.zeros((n, n))
        offset = 0
        for name, a, b in layout:
            D = _pairwise_sq_dists(Xs[:, a:b])
            full_D += D
            for s_idx, K in _kernels_descending(D, b - a, dtype):
                matrices[offset + s_idx] = K.copy()
            offset += len(SIGMAS)
        np.fill_diagonal(full_D, 0.0)
        for s_idx, K in _kernels_descending(full_D, FEATURE_DIM, dtype):
            matrices[offset + s_idx] = K.copy()
        self.matrices: list[np.ndarray] = matrices  # canonical bank order

    def combined(self, theta: np.ndarray) -> np.ndarray:
        """K(theta) = sum_m theta_m K_m, accumulated in float64."""
        K = np.zeros((self.n, self.n))
        for t, M in zip(theta, self.matrices):
            if t > 0.0:
                K += float(t) * M
        return K

    def quad_forms(self, v: np.ndarray) -> np.ndarray:
        """s_m = v^T K_m v for every kernel in the bank."""
        vc = v.astype(self.dtype, copy=False)
        return np.array([float(vc @ (M @ vc)) for M in self.matrices])


# ---------------------------------------------------------------------------
# SMO dual solver
# ---------------------------------------------------------------------------

def dual_objective(K, Y, alpha) -> float:
    """Soft-margin SVM dual objective W(alpha) for the given Gram."""
    alpha = np.asarray(alpha, dtype=np.float64)
    ay = alpha * np.asarray(Y, dtype=np.float64)
    return float(alpha.sum() - 0.5 * float(ay @ (np.asarray(K) @ ay)))


def svm_solve_dual(
    K,
    Y,
    C: float,
    tol: float = 1e-6,
    *,
    max_iter: int = 100_000,
    mirror: np.ndarray | None = None,
    alpha0: np.ndarray | None = None,
) -> np.ndarray:
    """Maximize the SVM dual by pairwise coordinate ascent (SMO).

    W(alpha) = sum(alpha) - 1/2 sum_kl alpha_k alpha_l y_k y_l K_kl subject
    to 0 <= alpha <= C and sum(alpha * y) = 0.  The maximal-violating pair
    is updated until the KKT violation gap drops below ``tol`` or
    ``max_iter`` pair updates are spent; hitting the cap with violation
    above 10*tol raises a :class:`ConvergenceWarning`.

    When ``mirror`` is given (index array mapping each row to its mirrored
    partner), coefficients of mirrored rows are averaged after convergence,
    which restores exact dual feasibility on mirror-closed problems.

    A warm start ``alpha0`` must already satisfy sum(alpha0 * y) = 0: pair
    updates preserve that sum, so an infeasible start would converge to the
    optimum of the wrong hyperplane and is rejected instead.
    """
    K = np.asarray(K, dtype=np.float64)
    y = np.asarray(Y, dtype=np.float64)
    n = y.size
    if K.shape != (n, n):
        raise ValueError(f"Gram shape {K.shape} does not match {n} labels")
    if C <= 0.0:
        raise ValueError("C must be positive")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("labels must be -1/+1")

    if alpha0 is None:
        alpha = np.zeros(n)
        ka = np.zeros(n)  # K @ (alpha * y)
    else:
        alpha = np.clip(np.asarray(alpha0, dtype=np.float64), 0.0, C).copy()
        if abs(float(alpha @ y)) > 1e-8 * (1.0 + C * n):
            raise ValueError("warm start violates sum(alpha * y) = 0")
        ka = K @ (alpha * y)

    pos = y > 0.0
    violation = np.inf
    for _ in range(max_iter):
        grad = y * ka - 1.0  # gradient of the minimization form
        score = -y * grad
        up = np.where(pos, alpha < C, alpha > 0.0)
        low = np.where(pos, alpha > 0.0, alpha < C)
        up_score = np.where(up, score, -np.inf)
        low_score = np.where(low, score, np.inf)
        i = int(np.argmax(up_score))
        j = int(np.argmin(low_score))
        violation = up_score[i] - low_score[j]
        if not np.isfinite(violation) or violation < tol:
            violation = max(violation, 0.0) if np.isfinite(violation) else 0.0
            break
        quad = max(K[i, i] + K[j, j] - 2.0 * K[i, j], 1e-12)
        step = violation / quad
        # Box limits along the feasible direction (alpha_i moves by y_i * t,
        # alpha_j by -y_j * t).
        cap_i = (C - alpha[i]) if pos[i] else alpha[i]
        cap_j = alpha[j] if pos[j] else (C - alpha[j])
        t = min(step, cap_i, cap_j)
        if t <= 0.0:
            break
        if t == cap_i:
            alpha[i] = C if pos[i] else 0.0
        else:
            alpha[i] += y[i] * t
        if t == cap_j:
            alpha[j] = 0.0 if pos[j] else C
        else:
            alpha[j] -= y[j] * t
        ka += t * (K[:, i] - K[:, j])
    else:
        if violation > 10.0 * tol:
            warnings.warn(
                f"SMO iteration cap {max_iter} reached with KKT violation "
                f"{violation:.3e} (tol {tol:.1e})",
                ConvergenceWarning,
                stacklevel=2,
            )

    if mirror is not None:
        mirror = np.asarray(mirror, dtype=np.intp)
        alpha = 0.5 * (alpha + alpha[mirror])
    return alpha


# ---------------------------------------------------------------------------
# MKLGL training
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MklConfig:
    """MKLGL hyperparameters."""

    C: float = 1.0
    p: float = 1.0
    outer_tol: float = 1e-3
    max_outer: int = 12
    inner_tol: float = 1e-6
    max_inner: int = 100_000


@dataclass(frozen=True)
class TrainedModel:
    """Immutable trained preference model.

    ``sv_rows`` are stored in standardized coordinates; ``train_features``
    (attached by the training pipeline) are raw per-image feature rows used
    to form test-time difference vectors.
    """

    theta: np.ndarray
    alpha: np.ndarray
    labels: np.ndarray
    sv_rows: np.ndarray
    norm_mu: np.ndarray
    norm_sd: np.ndarray
    bias: float
    config: dict
    objective_trace: tuple[float, ...]
    train_ids: np.ndarray | None = None
    train_features: np.ndarray | None = None

    @property
    def n_train(self) -> int:
        return 0 if self.train_ids is None else int(self.train_ids.size)

    def with_training_table(self, ids, features) -> "TrainedModel":
        ids = np.asarray(ids, dtype=np.int64)
        feats = np.asarray(features, dtype=np.float64)
        if feats.shape != (ids.size, FEATURE_DIM):
            raise ValueError(f"bad training table shapes: {ids.shape}, {feats.shape}")
        return replace(self, train_ids=ids, train_features=feats)


def _mirror_index(X: np.ndarray) -> np.ndarray | None:
    n = X.shape[0]
    if n % 2:
        return None
    half = n // 2
    if np.array_equal(X[half:], -X[:half]):
        return np.concatenate([np.arange(half, n), np.arange(half)])
    return None


def mklgl_train(D, config: MklConfig | None = None, layout=GROUP_SLICES) -> TrainedModel:
    """Alternating MKL trainer on a mirror-closed difference set.

    Repeats (1) an SMO dual solve on K = sum_m theta_m K_m and (2) the
    closed-form group-lasso weight update

        gamma_m = theta_m^2 * alpha^T (y y^T * K_m) alpha,
        theta_m <- gamma_m^(1/(1+p)) / (sum_l gamma_l^(p/(1+p)))^(1/p),

    until the weight vector moves less than ``outer_tol`` in sup norm or
    ``max_outer`` iterations are spent.  Bias is fixed at 0; rows with
    alpha below 1e-8 are dropped from the stored support vectors.
    """
    cfg = config or MklConfig()
    if cfg.C <= 0.0 or cfg.p <= 0.0:
        raise ValueError("C and p must be positive")
    if cfg.max_outer < 1:
        raise ValueError("max_outer must be >= 1")
    X = np.asarray(D.X, dtype=np.float64)
    Y = np.asarray(D.Y, dtype=np.float64)
    if X.size == 0:
        raise ValueError("empty training set")
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite features in training set")
    present = np.unique(Y)
    if present.size < 2:
        raise ValueError("single-class labels: need both -1 and +1")
    if not np.all(np.isin(present, (-1.0, 1.0))):
        raise ValueError("labels must be -1/+1")

    mirror = _mirror_index(X)
    # A mirror-closed set has exactly zero column means; storing the exact
    # zero keeps standardized rows exactly negation-symmetric, which the
    # antisymmetry guarantee of the decision function relies on.
    mu = np.zeros(FEATURE_DIM) if mirror is not None else X.mean(axis=0)
    sd = X.std(axis=0)
    sd = np.where(sd < 1e-12, 1.0, sd)
    Xs = (X - mu) / sd

    bank = _GramBank(Xs, layout)
    n_kernels = len(bank.specs)
    theta = np.full(n_kernels, 1.0 / n_kernels)
    alpha = None
    trace: list[float] = []
    converged = False
    outer_done = 0
    for outer in range(cfg.max_outer):
        K = bank.combined(theta)
        alpha = svm_solve_dual(
            K, Y, cfg.C, cfg.inner_tol,
            max_iter=cfg.max_inner, mirror=mirror, alpha0=alpha,
        )
        ay = alpha * Y
        trace.append(float(alpha.sum() - 0.5 * float(ay @ (K @ ay))))
        outer_done = outer + 1
        if converged or outer == cfg.max_outer - 1:
            break
        gamma = theta * theta * np.maximum(bank.quad_forms(ay), 0.0)
        total = float(gamma.sum())
        if total <= 0.0:
            break  # degenerate solve (alpha = 0); keep current weights
        ex = 1.0 / (1.0 + cfg.p)
        num = gamma**ex
        theta_new = num / float((gamma ** (cfg.p * ex)).sum()) ** (1.0 / cfg.p)
        theta_new[theta_new < _THETA_ZERO] = 0.0
        norm_p = float((theta_new**cfg.p).sum()) ** (1.0 / cfg.p)
        theta_new /= norm_p
        if float(np.max(np.abs(theta_new - theta))) < cfg.outer_tol:
            converged = True
        theta = theta_new

    keep = alpha >= _SV_KEEP_THRESHOLD
    snapshot = {
        "C": cfg.C,
        "p": cfg.p,
        "outer_tol": cfg.outer_tol,
        "max_outer": cfg.max_outer,
        "inner_tol": cfg.inner_tol,
        "max_inner": cfg.max_inner,
        "n_rows": int(X.shape[0]),
        "n_pairs": int(X.shape[0] // 2),
        "outer_iterations": outer_done,
        "outer_converged": bool(converged),
    }
    return TrainedModel(
        theta=theta,
        alpha=alpha[keep],
        labels=Y[keep],
        sv_rows=Xs[keep],
        norm_mu=mu,
        norm_sd=sd,
        bias=0.0,
        config=snapshot,
        objective_trace=tuple(trace),
    )


# ---------------------------------------------------------------------------
# Decision function
# ---------------------------------------------------------------------------

_DECISION_CHUNK_ENTRIES = 8_000_000


def _decision_standardized(model: TrainedModel, Xs: np.ndarray, layout=GROUP_SLICES) -> np.ndarray:
    n_sv = model.sv_rows.shape[0]
    if n_sv == 0:
        return np.zeros(Xs.shape[0])
    w = model.alpha * model.labels
    dtype = np.float32 if Xs.shape[0] * n_sv >= _DECISION_CHUNK_ENTRIES else np.float64
    out = np.empty(Xs.shape[0])
    chunk = max(1, _DECISION_CHUNK_ENTRIES // max(n_sv, 1))
    for start in range(0, Xs.shape[0], chunk):
        block = Xs[start : start + chunk]
        acc = np.zeros((block.shape[0], n_sv))
        full_D = np.zeros((block.shape[0], n_sv))
        offset = 0
        for name, a, b in layout:
            D = _pairwise_sq_dists(block[:, a:b], model.sv_rows[:, a:b])
            full_D += D
            theta5 = model.theta[offset : offset + len(SIGMAS)]
            if np.any(theta5 > 0.0):
                for s_idx, Km in _kernels_descending(D, b - a, dtype):
                    if theta5[s_idx] > 0.0:
                        acc += float(theta5[s_idx]) * Km
            offset += len(SIGMAS)
        theta5 = model.theta[offset : offset + len(SIGMAS)]
        if np.any(theta5 > 0.0):
            for s_idx, Km in _kernels_descending(full_D, FEATURE_DIM, dtype):
                if theta5[s_idx] > 0.0:
                    acc += float(theta5[s_idx]) * Km
        out[start : start + chunk] = acc @ w
    return out


def _standardize(model: TrainedModel, X: np.ndarray) -> np.ndarray:
    return (X - model.norm_mu) / model.norm_sd


def decision_values(model: TrainedModel, X) -> np.ndarray:
    """Decision function on raw difference vectors, batched."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != FEATURE_DIM:
        raise ValueError(f"expected {FEATURE_DIM}-dim difference vectors, got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite difference vector")
    return _decision_standardized(model, _standardize(model, X))


def decision_value(model: TrainedModel, x) -> float:
    """f(x) = sum_k alpha_k y_k sum_m theta_m K_m(x, x_k), bias 0."""
    return float(decision_values(model, np.asarray(x, dtype=np.float64)[None, :])[0])


def predict_labels(model: TrainedModel, X) -> np.ndarray:
    """Batched preference labels with the exact-zero rule."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    zero = np.max(np.abs(X), axis=1) == 0.0
    labels = np.zeros(X.shape[0], dtype=np.int64)
    rest = ~zero
    if np.any(rest):
        labels[rest] = np.sign(decision_values(model, X[rest])).astype(np.int64)
    return labels


def predict_label(model: TrainedModel, x) -> int:
    """0 for an exactly zero difference vector, else sign(decision_value)."""
    return int(predict_labels(model, np.asarray(x, dtype=np.float64)[None, :])[0])


# ---------------------------------------------------------------------------
# Model file I/O
# ---------------------------------------------------------------------------

def _require_table(model: TrainedModel) -> None:
    if model.train_ids is None or model.train_features is None:
        raise ValueError("model has no training table attached")


def save_model(model: TrainedModel, path) -> None:
    """Write the versioned little-endian model container."""
    _require_table(model)
    n_sv = int(model.alpha.size)
    n_train = int(model.train_ids.size)
    blob_dict = {"config": model.config, "objective_trace": list(model.objective_trace)}
    blob = json.dumps(blob_dict, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MODEL_MAGIC)
        fh.write(
            struct.pack(
                "<IIIIdd",
                _MODEL_VERSION,
                n_train,
                n_sv,
                FEATURE_DIM,
                float(model.config.get("p", 1.0)),
                float(model.config.get("C", 1.0)),
            )
        )
        for arr in (
            model.norm_mu,
            model.norm_sd,
            model.theta,
            model.sv_rows,
            model.alpha,
            model.labels,
        ):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(model.train_ids, dtype="<i8").tobytes())
        fh.write(np.ascontiguousarray(model.train_features, dtype="<f8").tobytes())
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)


def load_model(path) -> TrainedModel:
    """Read a model container written by :func:`save_model`."""
    data = Path(path).read_bytes()
    if len(data) < len(_MODEL_MAGIC) or data[: len(_MODEL_MAGIC)] != _MODEL_MAGIC:
        raise ManifestError(f"not a model file: {path}")
    off = len(_MODEL_MAGIC)
    version, n_train, n_sv, dim, p, c = struct.unpack_from("<IIIIdd", data, off)
    off += struct.calcsize("<IIIIdd")
    if version != _MODEL_VERSION:
        raise ManifestError(f"unsupported model version {version} in {path}")
    if dim != FEATURE_DIM:
        raise ManifestError(f"unsupported feature dim {dim} in {path}")

    def take(count, dtype):
        nonlocal off
        arr = np.frombuffer(data, dtype=dtype, count=count, offset=off)
        off += arr.nbytes
        return arr.copy()

    try:
        norm_mu = take(dim, "<f8")
        norm_sd = take(dim, "<f8")
        theta = take(len(SIGMAS) * 9, "<f8")
        sv_rows = take(n_sv * dim, "<f8").reshape(n_sv, dim)
        alpha = take(n_sv, "<f8")
        labels = take(n_sv, "<f8")
        train_ids = take(n_train, "<i8")
        train_features = take(n_train * dim, "<f8").reshape(n_train, dim)
        (blob_len,) = struct.unpack_from("<I", data, off)
        off += 4
        blob = json.loads(data[off : off + blob_len].decode("utf-8"))
        off += blob_len
    except (ValueError, json.JSONDecodeError) as exc:
        raise ManifestError(f"truncated or corrupt model file {path}: {exc}") from exc
    if off != len(data):
        raise ManifestError(f"trailing bytes in model file {path}")
    config = dict(blob.get("config", {}))
    config.setdefault("p", p)
    config.setdefault("C", c)
    return TrainedModel(
        theta=theta,
        alpha=alpha,
        labels=labels,
        sv_rows=sv_rows,
        norm_mu=norm_mu,
        norm_sd=norm_sd,
        bias=0.0,
        config=config,
        objective_trace=tuple(blob.get("objective_trace", ())),
        train_ids=train_ids,
        train_features=train_features,
    )


def export_model_text(model: TrainedModel) -> str:
    """Lossless JSON export (float repr round-trips exactly)."""
    _require_table(model)
    doc = {
        "theta": model.theta.tolist(),
        "alpha": model.alpha.tolist(),
        "labels": model.labels.tolist(),
        "sv_rows": model.sv_rows.tolist(),
        "norm_mu": model.norm_mu.tolist(),
        "norm_sd": model.norm_sd.tolist(),
        "bias": model.bias,
        "config": model.config,
        "objective_trace": list(model.objective_trace),
        "train_ids": model.train_ids.tolist(),
        "train_features": model.train_features.tolist(),
    }
    return json.dumps(doc, sort_keys=True)


def import_model_text(text: str) -> TrainedModel:
    """Inverse of :func:`export_model_text`."""
    doc = json.loads(text)
    return TrainedModel(
        theta=np.asarray(doc["theta"], dtype=np.float64),
        alpha=np.asarray(doc["alpha"], dtype=np.float64),
        labels=np.asarray(doc["labels"], dtype=np.float64),
        sv_rows=np.asarray(doc["sv_rows"], dtype=np.float64).reshape(-1, FEATURE_DIM),
        norm_mu=np.asarray(doc["norm_mu"], dtype=np.float64),
        norm_sd=np.asarray(doc["norm_sd"], dtype=np.float64),
        bias=float(doc["bias"]),
        config=dict(doc["config"]),
        objective_trace=tuple(doc["objective_trace"]),
        train_ids=np.asarray(doc["train_ids"], dtype=np.int64),
        train_features=np.asarray(doc["train_features"], dtype=np.float64).reshape(
            -1, FEATURE_DIM
        ),
    )
