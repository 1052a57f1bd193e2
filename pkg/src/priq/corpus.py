"""Dataset ingestion, synthetic distorted-corpus generation, and splits.

A dataset is a *manifest*: a CSV of scored images plus a JSON sidecar with
the declared score range.  The synthetic corpus generator produces seeded
procedural references and distorted variants with a deterministic
DMOS-like score, so end-to-end experiments run without any external image
database.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from ._errors import ManifestError, MissingFileError

POLARITIES = ("MOS", "DMOS")

MANIFEST_COLUMNS = ("id", "path", "group_id", "distortion_tag", "level", "score", "polarity")


@dataclass(frozen=True)
class ScoredImage:
    """One dataset row: an image file with its quality annotation."""

    id: int
    path: str
    group_id: int
    distortion_tag: str
    level: int
    score: float
    polarity: str

    def __post_init__(self):
        if self.polarity not in POLARITIES:
            raise ManifestError(f"unknown polarity {self.polarity!r} (id {self.id})")
        if self.level < 0:
            raise ManifestError(f"negative level {self.level} (id {self.id})")
        if (self.level == 0) != (self.distortion_tag == "ref"):
            raise ManifestError(
                f"level 0 must pair with tag 'ref' and vice versa (id {self.id})"
            )


@dataclass(frozen=True)
class Manifest:
    """An immutable collection of scored images with a declared score range."""

    images: tuple[ScoredImage, ...]
    score_min: float
    score_max: float
    name: str

    @property
    def polarity(self) -> str:
        return self.images[0].polarity if self.images else "DMOS"

    def group_ids(self) -> list[int]:
        return sorted({im.group_id for im in self.images})

    def scores(self) -> np.ndarray:
        return np.asarray([im.score for im in self.images], dtype=np.float64)

    def ids(self) -> np.ndarray:
        return np.asarray([im.id for im in self.images], dtype=np.int64)


def _validate_manifest(images: list[ScoredImage], score_min: float, score_max: float,
                       *, contiguous_groups: bool) -> None:
    seen: set[int] = set()
    polarity = images[0].polarity if images else None
    for im in images:
        if im.id in seen:
            raise ManifestError(f"duplicate id {im.id}")
        seen.add(im.id)
        if im.polarity != polarity:
            raise ManifestError("mixed polarity: manifest must be all MOS or all DMOS")
        if not (score_min <= im.score <= score_max):
            raise ManifestError(
                f"score {im.score} outside declared range [{score_min}, {score_max}] (id {im.id})"
            )
    if contiguous_groups:
        groups = sorted({im.group_id for im in images})
        if groups != list(range(len(groups))):
            raise ManifestError("group ids must form a contiguous 0-based set")


def load_manifest(path) -> Manifest:
    """Load and validate a manifest CSV plus its ``.meta.json`` sidecar.

    Every referenced image file must exist (paths are relative to the
    manifest's directory).
    """
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"manifest not found: {path}")
    meta_path = path.with_suffix(".meta.json")
    if not meta_path.is_file():
        raise MissingFileError(f"manifest sidecar not found: {meta_path}")
    try:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        name = str(meta["name"])
        score_min = float(meta["score_min"])
        score_max = float(meta["score_max"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ManifestError(f"bad manifest sidecar {meta_path}: {exc}") from exc

    images: list[ScoredImage] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != MANIFEST_COLUMNS:
            raise ManifestError(f"bad manifest header in {path}: {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(MANIFEST_COLUMNS):
                raise ManifestError(f"{path}:{lineno}: expected {len(MANIFEST_COLUMNS)} fields")
            try:
                images.append(
                    ScoredImage(
                        id=int(row[0]),
                        path=row[1],
                        group_id=int(row[2]),
                        distortion_tag=row[3],
                        level=int(row[4]),
                        score=float(row[5]),
                        polarity=row[6],
                    )
                )
            except (ValueError, TypeError) as exc:
                if isinstance(exc, ManifestError):
                    raise
                raise ManifestError(f"{path}:{lineno}: {exc}") from exc
    _validate_manifest(images, score_min, score_max, contiguous_groups=True)
    base = path.parent
    for im in images:
        if not (base / im.path).is_file():
            raise MissingFileError(f"image file missing: {base / im.path} (id {im.id})")
    return Manifest(images=tuple(images), score_min=score_min, score_max=score_max, name=name)


def save_manifest(manifest: Manifest, path) -> None:
    """Write the manifest CSV and its sidecar next to it."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_COLUMNS)
        for im in manifest.images:
            writer.writerow(
                [im.id, im.path, im.group_id, im.distortion_tag, im.level,
                 repr(im.score), im.polarity]
            )
    sidecar = {
        "name": manifest.name,
        "score_min": manifest.score_min,
        "score_max": manifest.score_max,
    }
    path.with_suffix(".meta.json").write_text(
        json.dumps(sidecar, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_image(path) -> np.ndarray:
    """Load an image file as a float64 grayscale matrix in [0, 255]."""
    p = Path(path)
    if not p.is_file():
        raise MissingFileError(f"image not found: {p}")
    with Image.open(p) as im:
        return np.asarray(im.convert("L"), dtype=np.float64)


# ---------------------------------------------------------------------------
# Synthetic corpus
# ---------------------------------------------------------------------------

DISTORTIONS = ("wn", "gblur", "jpegq", "contrast")

# Per-level distortion strengths (level 1..5).
_WN_SIGMA = (5.0, 9.0, 16.0, 28.0, 42.0)
_GBLUR_SIGMA = (0.8, 1.6, 2.8, 4.5, 7.0)
_JPEGQ_STEP = (8.0, 16.0, 32.0, 64.0, 128.0)
_CONTRAST_GAIN = (0.85, 0.70, 0.55, 0.40, 0.25)
_MAX_LEVELS = 5


@dataclass(frozen=True)
class SynthConfig:
    """Parameters of the synthetic corpus generator."""

    out_dir: str
    n_refs: int = 12
    width: int = 160
    height: int = 160
    distortions: tuple[str, ...] = DISTORTIONS
    n_levels: int = 5
    mse_cap: float = 2000.0
    name: str = "synth"


def synthetic_score(reference, distorted, mse_cap: float = 2000.0) -> float:
    """DMOS-like score: 100 * min(1, log(1 + MSE) / log(1 + mse_cap)).

    Monotone nondecreasing in MSE on the [0, 255] intensity scale; 0 for an
    exact copy, 100 at and beyond ``mse_cap``.
    """
    ref = np.asarray(reference, dtype=np.float64)
    dis = np.asarray(distorted, dtype=np.float64)
    if ref.shape != dis.shape:
        raise ValueError(f"dimension mismatch: {ref.shape} vs {dis.shape}")
    mse = float(np.mean((ref - dis) ** 2))
    return 100.0 * min(1.0, math.log1p(mse) / math.log1p(mse_cap))


def _make_reference(rng: np.random.Generator, height: int, width: int) -> np.ndarray:
    """Procedural textured reference: filtered noise + gradient + hard edges."""
    img = ndimage.gaussian_filter(rng.standard_normal((height, width)), 6.0)
    img = img / max(img.std(), 1e-9)
    fine = ndimage.gaussian_filter(rng.standard_normal((height, width)), 1.5)
    img = img + 0.6 * fine / max(fine.std(), 1e-9)

    yy, xx = np.mgrid[0:height, 0:width]
    yy = yy / (height - 1) * 2.0 - 1.0
    xx = xx / (width - 1) * 2.0 - 1.0
    ang = rng.uniform(0.0, 2.0 * np.pi)
    img = img + rng.uniform(0.6, 1.4) * (np.cos(ang) * xx + np.sin(ang) * yy)

    for _ in range(int(rng.integers(2, 5))):
        r0 = int(rng.integers(0, height - 8))
        c0 = int(rng.integers(0, width - 8))
        r1 = int(rng.integers(r0 + 4, min(height, r0 + height // 2) + 1))
        c1 = int(rng.integers(c0 + 4, min(width, c0 + width // 2) + 1))
        img[r0:r1, c0:c1] += rng.uniform(-1.5, 1.5)

    img = (img - img.mean()) / max(img.std(), 1e-9)
    img = 128.0 + 42.0 * img
    return np.clip(np.round(img), 0.0, 255.0)


def _jpegq_distort(img: np.ndarray, step: float) -> np.ndarray:
    """Uniform quantization of 8x8 block DCT coefficients (blockiness proxy)."""
    import scipy.fft

    h, w = img.shape
    ph = (8 - h % 8) % 8
    pw = (8 - w % 8) % 8
    padded = np.pad(img, ((0, ph), (0, pw)), mode="edge")
    hh, ww = padded.shape
    blocks = (
        padded.reshape(hh // 8, 8, ww // 8, 8).transpose(0, 2, 1, 3).reshape(-1, 8, 8)
    )
    coef = scipy.fft.dctn(blocks, type=2, norm="ortho", axes=(1, 2))
    coef = np.round(coef / step) * step
    rec = scipy.fft.idctn(coef, type=2, norm="ortho", axes=(1, 2))
    out = (
        rec.reshape(hh // 8, ww // 8, 8, 8).transpose(0, 2, 1, 3).reshape(hh, ww)
    )
    return out[:h, :w]


def _distort(reference: np.ndarray, tag: str, level: int, rng: np.random.Generator) -> np.ndarray:
    idx = level - 1
    if tag == "wn":
        out = reference + rng.normal(0.0, _WN_SIGMA[idx], reference.shape)
    elif tag == "gblur":
        out = ndimage.gaussian_filter(reference, _GBLUR_SIGMA[idx])
    elif tag == "jpegq":
        out = _jpegq_distort(reference, _JPEGQ_STEP[idx])
    elif tag == "contrast":
        out = reference.mean() + _CONTRAST_GAIN[idx] * (reference - reference.mean())
    else:
        raise ValueError(f"unknown distortion tag {tag!r}")
    return np.clip(np.round(out), 0.0, 255.0)


def _write_png(arr: np.ndarray, path: Path) -> None:
    Image.fromarray(arr.astype(np.uint8), mode="L").save(path, format="PNG")


def synth_corpus(config: SynthConfig, seed: int) -> Manifest:
    """Generate the synthetic corpus and write it under ``config.out_dir``.

    Writes ``n_refs`` reference images plus every (distortion, level)
    variant, a ``manifest.csv`` and its sidecar.  Scores are computed from
    the quantized pixel data actually written to disk, so reloading the
    corpus reproduces them exactly.  Deterministic per (config, seed).
    """
    if config.n_refs < 2:
        raise ValueError("need n_refs >= 2")
    if not (1 <= config.n_levels <= _MAX_LEVELS):
        raise ValueError(f"n_levels must be in [1, {_MAX_LEVELS}]")
    if config.width < 64 or config.height < 64:
        raise ValueError("image size must be at least 64x64")
    unknown = set(config.distortions) - set(DISTORTIONS)
    if unknown:
        raise ValueError(f"unknown distortions: {sorted(unknown)}")

    out = Path(config.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as exc:
        raise OSError(f"output directory not writable: {out}: {exc}") from exc

    images: list[ScoredImage] = []
    next_id = 0
    for ref_idx in range(config.n_refs):
        ref_rng = np.random.default_rng(np.random.SeedSequence((seed, ref_idx)))
        ref = _make_reference(ref_rng, config.height, config.width)
        ref_name = f"ref{ref_idx:03d}_ref.png"
        _write_png(ref, out / ref_name)
        images.append(
            ScoredImage(next_id, ref_name, ref_idx, "ref", 0, 0.0, "DMOS")
        )
        next_id += 1
        for tag_idx, tag in enumerate(config.distortions):
            for level in range(1, config.n_levels + 1):
                im_rng = np.random.default_rng(
                    np.random.SeedSequence((seed, ref_idx, tag_idx, level))
                )
                dist = _distort(ref, tag, level, im_rng)
                score = synthetic_score(ref, dist, config.mse_cap)
                name = f"ref{ref_idx:03d}_{tag}_l{level}.png"
                _write_png(dist, out / name)
                images.append(
                    ScoredImage(next_id, name, ref_idx, tag, level, score, "DMOS")
                )
                next_id += 1

    manifest = Manifest(
        images=tuple(images), score_min=0.0, score_max=100.0, name=config.name
    )
    save_manifest(manifest, out / "manifest.csv")
    return manifest


def split_by_group(manifest: Manifest, n_train_groups: int, seed: int) -> tuple[Manifest, Manifest]:
    """Group-respecting train/test split; selection uniform given the seed."""
    groups = manifest.group_ids()
    if not (1 <= n_train_groups < len(groups)):
        raise ValueError(
            f"n_train_groups must be in [1, {len(groups) - 1}], got {n_train_groups}"
        )
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(groups), size=n_train_groups, replace=False)
    train_groups = {groups[i] for i in chosen}
    train = tuple(im for im in manifest.images if im.group_id in train_groups)
    test = tuple(im for im in manifest.images if im.group_id not in train_groups)
    return (
        replace(manifest, images=train, name=manifest.name + ":train"),
        replace(manifest, images=test, name=manifest.name + ":test"),
    )
