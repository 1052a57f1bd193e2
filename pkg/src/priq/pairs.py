"""Preference-pair generation and the symmetric difference training set.

Pairs are sampled from scored manifests (eligible when the score gap
strictly exceeds a threshold T) or aggregated from raw per-subject votes.
The training set doubles each pair's feature difference with its negation
so the learned decision function is antisymmetric by construction.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._errors import ManifestError, NoEligiblePairsError
from .corpus import Manifest
from .features import FEATURE_DIM


@dataclass(frozen=True)
class PrefPair:
    """Ordered image-id pair with preference label y (+1: i preferred)."""

    i: int
    j: int
    y: int

    def __post_init__(self):
        if self.i == self.j:
            raise ValueError(f"self-pair forbidden (id {self.i})")
        if self.y not in (-1, 1):
            raise ValueError(f"label must be -1 or +1, got {self.y}")


@dataclass(frozen=True)
class DiffSet:
    """Mirror-closed difference-vector training set.

    Row ``N + k`` is the negation of row ``k`` with the opposite label;
    ``pair_index[row]`` gives (source pair position, orientation).
    """

    X: np.ndarray
    Y: np.ndarray
    pair_index: tuple[tuple[int, int], ...]

    @property
    def n_pairs(self) -> int:
        return self.X.shape[0] // 2


def aggregate_votes(votes) -> int:
    """Sign-of-sum label aggregation; 0 means the pair is discarded."""
    votes = list(votes)
    if not votes:
        raise ValueError("empty vote list")
    for v in votes:
        if v not in (-1, 0, 1):
            raise ValueError(f"votes must be in {{-1, 0, +1}}, got {v!r}")
    total = sum(votes)
    return (total > 0) - (total < 0)


def max_pair_count(scores, T: float) -> int:
    """Exact count of unordered pairs with |q_i - q_j| > T (strict).

    O(n log n): sort once, then a nondecreasing second pointer marks the
    first partner exceeding the gap for each anchor.
    """
    s = np.sort(np.asarray(scores, dtype=np.float64))
    n = s.size
    total = 0
    j = 0
    for i in range(n):
        if j < i + 1:
            j = i + 1
        while j < n and s[j] - s[i] <= T:
            j += 1
        total += n - j
    return total


def gen_pairs_from_scores(manifest: Manifest, T: float, N: int, seed: int) -> list[PrefPair]:
    """Uniformly sample min(N, M) distinct eligible pairs from one manifest.

    Eligibility is |q_i - q_j| > T (strict).  Labels follow the manifest
    polarity: for MOS, y = sign(q_i - q_j); for DMOS the sign is flipped
    (lower DMOS is better).  Deterministic per seed.
    """
    if T < 0:
        raise ValueError("T must be >= 0")
    if N < 1:
        raise ValueError("N must be >= 1")
    ids = [im.id for im in manifest.images]
    q = manifest.scores()
    n = len(ids)
    m_eligible = max_pair_count(q, T)
    if m_eligible == 0:
        raise NoEligiblePairsError(
            f"threshold {T} leaves no eligible pairs in manifest {manifest.name!r}"
        )
    total = n * (n - 1) // 2
    want = min(N, m_eligible)
    rng = np.random.default_rng(seed)

    # Rejection sampling is uniform and fast while eligible pairs are dense
    # and we need few of them; otherwise enumerate + shuffle (exact).
    use_rejection = (m_eligible >= 0.01 * total) and (want <= m_eligible // 2)
    chosen: list[tuple[int, int]] = []
    if use_rejection:
        seen: set[tuple[int, int]] = set()
        attempts = 0
        cap = 60 * want + 1000
        while len(chosen) < want and attempts < cap:
            batch = max(64, 2 * (want - len(chosen)))
            aa = rng.integers(0, n, size=batch)
            bb = rng.integers(0, n, size=batch)
            attempts += batch
            for a, b in zip(aa, bb):
                if a == b:
                    continue
                key = (int(a), int(b)) if a < b else (int(b), int(a))
                if key in seen:
                    continue
                if abs(q[key[0]] - q[key[1]]) > T:
                    seen.add(key)
                    chosen.append(key)
                    if len(chosen) == want:
                        break
        if len(chosen) < want:
            use_rejection = False
            chosen = []
    if not use_rejection:
        eligible = [
            (a, b) for a in range(n) for b in range(a + 1, n) if abs(q[a] - q[b]) > T
        ]
        order = rng.permutation(len(eligible))[:want]
        chosen = [eligible[k] for k in order]

    flip = -1 if manifest.polarity == "DMOS" else 1
    out = []
    for a, b in chosen:
        y = 1 if q[a] > q[b] else -1
        out.append(PrefPair(i=ids[a], j=ids[b], y=flip * y))
    return out


def build_diffset(pairs, features) -> DiffSet:
    """Build the mirror-closed difference set from pairs and cached features."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("no pairs given")
    n = len(pairs)
    X = np.empty((2 * n, FEATURE_DIM), dtype=np.float64)
    Y = np.empty(2 * n, dtype=np.float64)
    for k, p in enumerate(pairs):
        try:
            fi = features[p.i]
            fj = features[p.j]
        except KeyError as exc:
            raise ValueError(f"missing feature for image id {exc.args[0]}") from exc
        X[k] = np.asarray(fi, dtype=np.float64) - np.asarray(fj, dtype=np.float64)
        Y[k] = p.y
    X[n:] = -X[:n]
    Y[n:] = -Y[:n]
    index = tuple((k, 1) for k in range(n)) + tuple((k, -1) for k in range(n))
    return DiffSet(X=X, Y=Y, pair_index=index)


def save_pairs(path, pairs, header: dict | None = None) -> None:
    """Write pairs as CSV ``i,j,y`` with provenance comment lines."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for key, value in (header or {}).items():
            fh.write(f"# {key}={value}\n")
        writer = csv.writer(fh)
        writer.writerow(["i", "j", "y"])
        for p in pairs:
            writer.writerow([p.i, p.j, p.y])


def load_pairs(path) -> list[PrefPair]:
    """Read a pair CSV written by :func:`save_pairs`."""
    path = Path(path)
    out: list[PrefPair] = []
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [line for line in fh if not line.startswith("#")]
    reader = csv.reader(rows)
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != ["i", "j", "y"]:
        raise ManifestError(f"bad pair file header in {path}: {header}")
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        try:
            out.append(PrefPair(i=int(row[0]), j=int(row[1]), y=int(row[2])))
        except (ValueError, TypeError) as exc:
            raise ManifestError(f"{path}:{lineno}: {exc}") from exc
    return out
