"""84-dimensional natural-scene-statistics feature extraction.

A grayscale image is summarized by one 84-entry vector laid out as

    [bld1(8) bld2(8) bld3(8) | brl1(18) brl2(18) | m(8) v(8) e(8)]

where ``bld1..3`` are block-DCT statistics at three dyadic scales, ``brl1..2``
are MSCN-domain statistics at two scales, and ``m``/``v``/``e`` are mean,
variance, and entropy summaries of a 4-level Haar decomposition.

``GROUP_SLICES`` is the single source of truth for the group boundaries; the
kernel bank in :mod:`priq.mkl` is built from it.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
import scipy.fft
from scipy import ndimage
from scipy.special import gamma as _gamma_fn
from scipy.special import gammaln

from ._errors import ManifestError

FEATURE_DIM = 84

# (name, start, stop) group boundaries of the fused feature vector.
GROUP_SLICES: tuple[tuple[str, int, int], ...] = (
    ("bld1", 0, 8),
    ("bld2", 8, 16),
    ("bld3", 16, 24),
    ("brl1", 24, 42),
    ("brl2", 42, 60),
    ("m", 60, 68),
    ("v", 68, 76),
    ("e", 76, 84),
)

_SHAPE_MIN = 0.1
_SHAPE_MAX = 10.0
_GGD_FALLBACK = (10.0, 0.0)

_CACHE_MAGIC = b"PRIQF1"


def _as_image(img, min_side: int = 64) -> np.ndarray:
    a = np.asarray(img, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"image must be 2-D, got shape {a.shape}")
    if min(a.shape) < min_side:
        raise ValueError(
            f"image too small: {a.shape[1]}x{a.shape[0]} (need at least {min_side} per side)"
        )
    if not np.all(np.isfinite(a)):
        raise ValueError("image contains non-finite values")
    return a


def downsample2(img) -> np.ndarray:
    """2x2 box-average then decimate; odd trailing row/column dropped.

    The public contract calls this on images of side >= 64; internally the
    extraction pyramid reuses it down to small scales, so the hard floor
    here is only what keeps the averaging well formed.
    """
    a = _as_image(img, min_side=4)
    h = (a.shape[0] // 2) * 2
    w = (a.shape[1] // 2) * 2
    a = a[:h, :w]
    return 0.25 * (a[0::2, 0::2] + a[0::2, 1::2] + a[1::2, 0::2] + a[1::2, 1::2])


# ---------------------------------------------------------------------------
# GGD / AGGD moment-matching fits
# ---------------------------------------------------------------------------

def _ggd_ratio(shape):
    # rho(g) = Gamma(2/g)^2 / (Gamma(1/g) Gamma(3/g)); monotone increasing in g.
    shape = np.asarray(shape, dtype=np.float64)
    return np.exp(2.0 * gammaln(2.0 / shape) - gammaln(1.0 / shape) - gammaln(3.0 / shape))


# Lookup grid bracketing the inverse of _ggd_ratio on [0.1, 10].
_GRID_SHAPE = np.logspace(np.log10(_SHAPE_MIN), np.log10(_SHAPE_MAX), 2048)
_GRID_RATIO = _ggd_ratio(_GRID_SHAPE)


def _shape_from_ratio(ratio) -> np.ndarray:
    """Invert the GGD moment ratio: grid lookup then bisection refinement.

    Inputs outside the representable ratio range clamp to the shape bounds;
    non-finite inputs map to the degenerate fallback shape 10.
    """
    r = np.atleast_1d(np.asarray(ratio, dtype=np.float64))
    bad = ~np.isfinite(r)
    rc = np.where(bad, _GRID_RATIO[-1], r)
    idx = np.searchsorted(_GRID_RATIO, rc)
    below = idx == 0
    above = idx == len(_GRID_RATIO)
    idx = np.clip(idx, 1, len(_GRID_RATIO) - 1)
    lo = _GRID_SHAPE[idx - 1]
    hi = _GRID_SHAPE[idx]
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        high = _ggd_ratio(mid) >= rc
        hi = np.where(high, mid, hi)
        lo = np.where(high, lo, mid)
    shape = 0.5 * (lo + hi)
    shape[below] = _SHAPE_MIN
    shape[above | bad] = _SHAPE_MAX
    return shape


def _validated_samples(samples) -> np.ndarray:
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size < 64:
        raise ValueError(f"need at least 64 samples, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise ValueError("samples contain non-finite values")
    return x


def fit_ggd(samples) -> tuple[float, float]:
    """Zero-mean generalized Gaussian fit by moment matching.

    Returns ``(shape, sigma)`` with shape clamped to [0.1, 10] and
    ``sigma = sqrt(E[x^2])``.  All-equal input returns the degenerate
    fallback ``(10, 0)``.
    """
    x = _validated_samples(samples)
    if np.all(x == x[0]):
        return _GGD_FALLBACK
    m1 = float(np.mean(np.abs(x)))
    m2 = float(np.mean(x * x))
    if m1 <= 0.0 or m2 <= 0.0:
        return _GGD_FALLBACK
    shape = float(_shape_from_ratio(m1 * m1 / m2)[0])
    return shape, float(np.sqrt(m2))


def fit_aggd(samples) -> tuple[float, float, float, float]:
    """Asymmetric GGD fit: separate left/right second moments.

    Returns ``(shape, mean, sigma_left, sigma_right)``.  The shape comes from
    the standard adjusted moment ratio; the mean term is the fitted
    distribution's first moment.  All-equal input returns the fallback
    ``(10, 0, 0, 0)``.
    """
    x = _validated_samples(samples)
    if np.all(x == x[0]):
        return (10.0, 0.0, 0.0, 0.0)
    left = x[x < 0.0]
    right = x[x > 0.0]
    s_l = float(np.sqrt(np.mean(left * left))) if left.size else 0.0
    s_r = float(np.sqrt(np.mean(right * right))) if right.size else 0.0
    if s_l == 0.0 and s_r == 0.0:
        return (10.0, 0.0, 0.0, 0.0)
    m1 = float(np.mean(np.abs(x)))
    m2 = float(np.mean(x * x))
    # Side ratio capped so the adjusted-ratio formula stays finite when one
    # side is empty (the formula tends to the symmetric ratio as g -> inf).
    g = s_l / s_r if s_r > 0.0 else 1e6
    g = min(max(g, 1e-6), 1e6)
    adjusted = (m1 * m1 / m2) * (g**3 + 1.0) * (g + 1.0) / (g * g + 1.0) ** 2
    shape = float(_shape_from_ratio(adjusted)[0])
    eta = (
        (s_r - s_l)
        * (_gamma_fn(2.0 / shape) / _gamma_fn(1.0 / shape))
        * float(np.sqrt(_gamma_fn(1.0 / shape) / _gamma_fn(3.0 / shape)))
    )
    return shape, float(eta), s_l, s_r


# ---------------------------------------------------------------------------
# Spatial (MSCN) features: brl1, brl2
# ---------------------------------------------------------------------------

def _gaussian_window(size: int = 7, sigma: float = 7.0 / 6.0) -> np.ndarray:
    half = size // 2
    g = np.exp(-0.5 * (np.arange(-half, half + 1) / sigma) ** 2)
    w = np.outer(g, g)
    return w / w.sum()


_MSCN_WINDOW = _gaussian_window()


def mscn_field(img) -> np.ndarray:
    """Mean-subtracted contrast-normalized map, 7x7 Gaussian window, C = 1."""
    a = np.asarray(img, dtype=np.float64)
    mu = ndimage.correlate(a, _MSCN_WINDOW, mode="nearest")
    sq = ndimage.correlate(a * a, _MSCN_WINDOW, mode="nearest")
    var = np.maximum(sq - mu * mu, 0.0)
    return (a - mu) / (np.sqrt(var) + 1.0)


def _neighbor_products(f: np.ndarray):
    yield f[:, :-1] * f[:, 1:]      # horizontal
    yield f[:-1, :] * f[1:, :]      # vertical
    yield f[:-1, :-1] * f[1:, 1:]   # main diagonal
    yield f[:-1, 1:] * f[1:, :-1]   # anti diagonal


def spatial_features(img) -> np.ndarray:
    """18 MSCN-domain features per scale over 2 scales (brl1, brl2)."""
    a = _as_image(img)
    feats: list[float] = []
    cur = a
    for scale in (1, 2):
        if scale > 1:
            cur = downsample2(cur)
        f = mscn_field(cur)
        shape, sigma = fit_ggd(f.ravel())
        feats.extend([shape, sigma * sigma])
        for prod in _neighbor_products(f):
            s, eta, s_l, s_r = fit_aggd(prod.ravel())
            feats.extend([s, eta, s_l * s_l, s_r * s_r])
    return np.asarray(feats, dtype=np.float64)


# ---------------------------------------------------------------------------
# Block-DCT features: bld1..3
# ---------------------------------------------------------------------------

# Index bookkeeping for 5x5 blocks, DC at (0, 0), flattened row-major.
_FREQ_I, _FREQ_J = np.divmod(np.arange(25), 5)
_AC = (_FREQ_I + _FREQ_J) > 0
_AC_IDX = np.flatnonzero(_AC)
_RADIAL = _FREQ_I + _FREQ_J
# Three radial AC bands: i+j in {1,2}, {3,4}, {5..8} (sizes 5, 9, 10).
_BAND_IDX = [
    np.flatnonzero(_AC & (_RADIAL <= 2)),
    np.flatnonzero((_RADIAL >= 3) & (_RADIAL <= 4)),
    np.flatnonzero(_RADIAL >= 5),
]
# Three orientation sets: above diagonal, below diagonal, on-diagonal AC
# (sizes 10, 10, 4).
_ORIENT_IDX = [
    np.flatnonzero(_FREQ_I < _FREQ_J),
    np.flatnonzero(_FREQ_I > _FREQ_J),
    np.flatnonzero(_AC & (_FREQ_I == _FREQ_J)),
]


def _safe_div(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.zeros_like(num)
    ok = den > 0.0
    out[ok] = num[ok] / den[ok]
    return out


def _block_dct_quantities(a: np.ndarray) -> tuple[np.ndarray, ...]:
    """Per-5x5-block (GGD shape, zeta, band ratio, orientation variance)."""
    nb_r = a.shape[0] // 5
    nb_c = a.shape[1] // 5
    blocks = (
        a[: nb_r * 5, : nb_c * 5]
        .reshape(nb_r, 5, nb_c, 5)
        .transpose(0, 2, 1, 3)
        .reshape(nb_r * nb_c, 5, 5)
    )
    coef = scipy.fft.dctn(blocks, type=2, norm="ortho", axes=(1, 2)).reshape(-1, 25)
    ac = coef[:, _AC_IDX]
    aac = np.abs(ac)
    m1 = aac.mean(axis=1)
    m2 = (ac * ac).mean(axis=1)

    # (a) GGD shape of the 24 AC coefficients (degenerate blocks fall back
    # to the clamp ceiling, matching fit_ggd's fallback shape).
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(m2 > 0.0, m1 * m1 / m2, np.nan)
    shape = _shape_from_ratio(ratio)

    # (b) frequency variation: coefficient of variation of |AC|.
    zeta = _safe_div(aac.std(axis=1), m1)

    # (c) energy-subband ratio, averaged over the two higher bands.
    e1 = (coef[:, _BAND_IDX[0]] ** 2).mean(axis=1)
    e2 = (coef[:, _BAND_IDX[1]] ** 2).mean(axis=1)
    e3 = (coef[:, _BAND_IDX[2]] ** 2).mean(axis=1)
    band = 0.5 * (_safe_div(e2, e1) + _safe_div(e3, e1 + e2))

    # (d) orientation variance of per-set zeta.
    zsets = np.stack(
        [
            _safe_div(np.abs(coef[:, idx]).std(axis=1), np.abs(coef[:, idx]).mean(axis=1))
            for idx in _ORIENT_IDX
        ],
        axis=1,
    )
    orient = zsets.var(axis=1)
    return shape, zeta, band, orient


def dct_features(img) -> np.ndarray:
    """8 block-DCT features per scale over 3 scales (bld1..3).

    Each of the four per-block quantities is pooled two ways: mean over all
    blocks, and mean over the 10% of blocks with the lowest GGD shape.
    """
    a = _as_image(img)
    feats: list[float] = []
    cur = a
    for scale in (1, 2, 3):
        if scale > 1:
            cur = downsample2(cur)
        quantities = _block_dct_quantities(cur)
        shape = quantities[0]
        k = max(1, int(0.1 * shape.size))
        low = np.argsort(shape, kind="stable")[:k]
        for q in quantities:
            feats.extend([float(q.mean()), float(q[low].mean())])
    return np.asarray(feats, dtype=np.float64)


# ---------------------------------------------------------------------------
# Haar wavelet features: m, v, e
# ---------------------------------------------------------------------------

def _haar_level(a: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    h = (a.shape[0] // 2) * 2
    w = (a.shape[1] // 2) * 2
    a = a[:h, :w]
    p00 = a[0::2, 0::2]
    p01 = a[0::2, 1::2]
    p10 = a[1::2, 0::2]
    p11 = a[1::2, 1::2]
    ll = 0.5 * (p00 + p01 + p10 + p11)
    lh = 0.5 * (p00 - p01 + p10 - p11)
    hl = 0.5 * (p00 + p01 - p10 - p11)
    hh = 0.5 * (p00 - p01 - p10 + p11)
    return ll, lh, hl, hh


def _entropy64(coeffs: np.ndarray) -> float:
    # Fixed absolute 64-bin grid so entropy is comparable across images.
    hist, _ = np.histogram(np.clip(coeffs, -128.0, 128.0), bins=64, range=(-128.0, 128.0))
    p = hist[hist > 0] / coeffs.size
    return float(-(p * np.log(p)).sum())


def wavelet_features(img) -> np.ndarray:
    """4-level Haar statistics: per level, union(LH, HL) and HH collections.

    Output grouped by statistic: 8 mean-of-|coef| entries, then 8 variances,
    then 8 histogram entropies (nats).
    """
    a = _as_image(img)
    means: list[float] = []
    variances: list[float] = []
    entropies: list[float] = []
    cur = a
    for _level in range(4):
        cur, lh, hl, hh = _haar_level(cur)
        for coll in (np.concatenate([lh.ravel(), hl.ravel()]), hh.ravel()):
            means.append(float(np.mean(np.abs(coll))))
            variances.append(float(np.var(coll)))
            entropies.append(_entropy64(coll))
    return np.asarray(means + variances + entropies, dtype=np.float64)


def extract_all(img) -> np.ndarray:
    """Full 84-dim fused feature vector in the declared group layout."""
    a = _as_image(img)
    vec = np.concatenate([dct_features(a), spatial_features(a), wavelet_features(a)])
    if vec.shape != (FEATURE_DIM,):
        raise RuntimeError(f"feature layout broken: got {vec.shape}")
    if not np.all(np.isfinite(vec)):
        raise RuntimeError("non-finite feature value produced")
    return vec


# ---------------------------------------------------------------------------
# Feature cache file (binary, little-endian)
# ---------------------------------------------------------------------------

_RECORD_DTYPE = np.dtype([("id", "<i8"), ("f", "<f8", (FEATURE_DIM,))])


def write_feature_cache(path, ids, features) -> None:
    """Write an id -> feature-vector table.

    Layout: magic ``PRIQF1``, u32 image count, u32 dim (84), then per image
    one little-endian record (i64 id, 84 f64 features).
    """
    ids = np.asarray(ids, dtype=np.int64)
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim != 2 or feats.shape[1] != FEATURE_DIM or feats.shape[0] != ids.size:
        raise ValueError(f"bad cache shapes: ids {ids.shape}, features {feats.shape}")
    rec = np.empty(ids.size, dtype=_RECORD_DTYPE)
    rec["id"] = ids
    rec["f"] = feats
    with open(path, "wb") as fh:
        fh.write(_CACHE_MAGIC)
        fh.write(struct.pack("<II", ids.size, FEATURE_DIM))
        fh.write(rec.tobytes())


def read_feature_cache(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a feature cache; returns (ids, features)."""
    data = Path(path).read_bytes()
    head = len(_CACHE_MAGIC) + 8
    if len(data) < head or data[: len(_CACHE_MAGIC)] != _CACHE_MAGIC:
        raise ManifestError(f"not a feature cache file: {path}")
    count, dim = struct.unpack_from("<II", data, len(_CACHE_MAGIC))
    if dim != FEATURE_DIM:
        raise ManifestError(f"unsupported feature dim {dim} in {path}")
    expect = head + count * _RECORD_DTYPE.itemsize
    if len(data) != expect:
        raise ManifestError(f"truncated feature cache: {path}")
    rec = np.frombuffer(data[head:], dtype=_RECORD_DTYPE)
    return rec["id"].copy(), rec["f"].copy()
