"""Quality scoring by pairwise preference voting against the training set.

A test image is compared with every training image through the trained
preference model; the sum of the predicted labels is the image's gain,
mapped affinely so that -(n-1) votes land at 0 and +(n-1) at 100.  The
map is not clamped: a training member never beats itself (its self-pair
votes 0), so its score stays in [0, 100], while an outside image that
wins or loses all n comparisons lands 50/(n-1) beyond the endpoint.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._errors import ManifestError, MissingFileError
from .features import FEATURE_DIM
from .mkl import TrainedModel, predict_labels


def training_gain(labels) -> int:
    """Sum of pairwise preference votes; labels must be -1 or +1 only."""
    arr = np.asarray(labels, dtype=np.int64)
    if arr.size and not np.all(np.isin(arr, (-1, 1))):
        raise ValueError("labels must be -1/+1")
    return int(arr.sum())


def gain_to_score_params(n_train: int) -> tuple[float, float]:
    """Affine map (a, b) with score = a * gain + b sending -(n-1) -> 0 and
    +(n-1) -> 100."""
    if n_train < 2:
        raise ValueError("need at least 2 training images to map gains")
    return 50.0 / (n_train - 1), 50.0


@dataclass(frozen=True)
class QualityReport:
    """Scored test image: vote gain and its mapped quality score."""

    image_id: int
    gain: int
    score: float
    n_train: int


def score_image(model: TrainedModel, features, image_id: int = -1) -> QualityReport:
    """Score one test image from its raw 84-dim feature vector.

    The image is paired with every row of the model's training table; the
    predicted labels (with the exact-zero-difference rule) are summed into
    the gain g and mapped to score = 50 * (g / (n - 1) + 1).
    """
    if model.train_features is None:
        raise ValueError("model has no training table attached")
    f = np.asarray(features, dtype=np.float64).reshape(-1)
    if f.shape != (FEATURE_DIM,):
        raise ValueError(f"expected a {FEATURE_DIM}-dim feature vector, got {f.shape}")
    n = model.train_features.shape[0]
    if n < 2:
        raise ValueError("need at least 2 training images to score")
    diffs = f[None, :] - model.train_features
    gain = int(predict_labels(model, diffs).sum())
    score = 50.0 * (gain / (n - 1) + 1.0)
    return QualityReport(image_id=int(image_id), gain=gain, score=score, n_train=n)


def score_batch(model: TrainedModel, features, image_ids=None) -> list[QualityReport]:
    """Score a batch of test images (rows of ``features``) in order.

    All test-vs-train difference vectors are pushed through the decision
    function in one batched call.
    """
    if model.train_features is None:
        raise ValueError("model has no training table attached")
    F = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if F.shape[1] != FEATURE_DIM:
        raise ValueError(f"expected {FEATURE_DIM}-dim feature rows, got {F.shape}")
    n = model.train_features.shape[0]
    if n < 2:
        raise ValueError("need at least 2 training images to score")
    if image_ids is None:
        image_ids = np.arange(F.shape[0])
    ids = np.asarray(image_ids, dtype=np.int64)
    if ids.size != F.shape[0]:
        raise ValueError("image_ids length does not match feature rows")
    m = F.shape[0]
    diffs = (F[:, None, :] - model.train_features[None, :, :]).reshape(m * n, FEATURE_DIM)
    votes = predict_labels(model, diffs).reshape(m, n)
    gains = votes.sum(axis=1)
    return [
        QualityReport(
            image_id=int(i),
            gain=int(g),
            score=50.0 * (int(g) / (n - 1) + 1.0),
            n_train=n,
        )
        for i, g in zip(ids, gains)
    ]


def save_scores(reports, path, *, model_path=None, manifest_name=None) -> None:
    """Write scores as CSV (id, gain, score) plus a JSON sidecar of scoring
    parameters; content is a pure function of inputs (no timestamps)."""
    reports = list(reports)
    path = Path(path)
    lines = ["id,gain,score"]
    for r in reports:
        lines.append(f"{r.image_id},{r.gain},{r.score!r}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    meta = {
        "n_images": len(reports),
        "n_train": reports[0].n_train if reports else 0,
        "score_map": "50*(gain/(n_train-1)+1)",
    }
    if manifest_name is not None:
        meta["manifest"] = manifest_name
    if model_path is not None:
        digest = hashlib.sha256(Path(model_path).read_bytes()).hexdigest()
        meta["model_sha256"] = digest
    sidecar = path.with_suffix(".meta.json")
    sidecar.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_scores(path) -> list[QualityReport]:
    """Read a score CSV written by :func:`save_scores`."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise MissingFileError(f"score file not found: {path}") from exc
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != "id,gain,score":
        raise ManifestError(f"bad score file header in {path}")
    meta_path = path.with_suffix(".meta.json")
    n_train = 0
    if meta_path.exists():
        n_train = int(json.loads(meta_path.read_text(encoding="utf-8")).get("n_train", 0))
    out = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 3:
            raise ManifestError(f"bad score row in {path}: {ln!r}")
        try:
            out.append(
                QualityReport(
                    image_id=int(parts[0]),
                    gain=int(parts[1]),
                    score=float(parts[2]),
                    n_train=n_train,
                )
            )
        except ValueError as exc:
            raise ManifestError(f"bad score row in {path}: {ln!r}") from exc
    return out
