"""Derive pair and triplet constraint sets from rating labels.

Triplets follow the sigma-thresholded rule: the literal variant keeps ordered
distinct (a, b, c) with S_a <= S_b + sigma < S_c; the symmetric variant keeps
(a, b, c) with |S_a - S_b| + sigma < |S_a - S_c|. Enumeration is exhaustive and
canonicalized to lexicographic (a, b, c) order, so downstream subsampling is
reproducible.
"""

from __future__ import annotations

import numpy as np

from .core import LabeledDataset, PairSets, TripletSet
from .errors import ConfigurationError

TRIPLET_VARIANTS = ("literal", "symmetric")


def build_pairs(dataset: LabeledDataset) -> PairSets:
    """All unordered pairs, split into equal-rating (similar) and unequal-rating."""
    labels = dataset.labels
    i, j = np.triu_indices(dataset.n, k=1)
    eq = labels[i] == labels[j]
    similar = np.stack([i[eq], j[eq]], axis=1)
    dissimilar = np.stack([i[~eq], j[~eq]], axis=1)
    return PairSets(similar=similar, dissimilar=dissimilar)


def _literal_triplets(labels: np.ndarray, sigma: float) -> np.ndarray:
    # The predicate factors through b: a ranges over {S_a <= S_b + sigma},
    # c over {S_c > S_b + sigma}; those sets are automatically disjoint.
    n = labels.shape[0]
    blocks = []
    for b in range(n):
        thr = labels[b] + sigma
        a_idx = np.flatnonzero(labels <= thr)
        a_idx = a_idx[a_idx != b]
        c_idx = np.flatnonzero(labels > thr)
        if a_idx.size == 0 or c_idx.size == 0:
            continue
        block = np.empty((a_idx.size * c_idx.size, 3), dtype=np.int64)
        block[:, 0] = np.repeat(a_idx, c_idx.size)
        block[:, 1] = b
        block[:, 2] = np.tile(c_idx, a_idx.size)
        blocks.append(block)
    if not blocks:
        return np.empty((0, 3), dtype=np.int64)
    return np.concatenate(blocks, axis=0)


def _symmetric_triplets(labels: np.ndarray, sigma: float) -> np.ndarray:
    n = labels.shape[0]
    blocks = []
    for a in range(n):
        gaps = np.abs(labels - labels[a])
        ok = gaps[:, None] + sigma < gaps[None, :]
        ok[a, :] = False  # b = a would not be a distinct triple
        b_idx, c_idx = np.nonzero(ok)
        if b_idx.size == 0:
            continue
        block = np.empty((b_idx.size, 3), dtype=np.int64)
        block[:, 0] = a
        block[:, 1] = b_idx
        block[:, 2] = c_idx
        blocks.append(block)
    if not blocks:
        return np.empty((0, 3), dtype=np.int64)
    return np.concatenate(blocks, axis=0)


def build_triplets(dataset: LabeledDataset, sigma: float, variant: str = "literal") -> TripletSet:
    """Enumerate every triplet satisfying the variant's predicate; may be empty."""
    if dataset.n < 3:
        raise ConfigurationError(f"triplet construction needs n >= 3, got n={dataset.n}")
    if sigma < 0:
        raise ConfigurationError(f"sigma must be nonnegative, got {sigma}")
    if variant not in TRIPLET_VARIANTS:
        raise ConfigurationError(f"unknown triplet variant {variant!r}")
    labels = dataset.labels.astype(float)
    if variant == "literal":
        idx = _literal_triplets(labels, sigma)
    else:
        idx = _symmetric_triplets(labels, sigma)
    if idx.shape[0]:
        order = np.lexsort((idx[:, 2], idx[:, 1], idx[:, 0]))
        idx = idx[order]
    return TripletSet(indices=idx, sigma=sigma)


def subsample_triplets(triplets: TripletSet, m: int, seed) -> TripletSet:
    """Uniform sample of min(m, |set|) triplets without replacement; order canonical."""
    if m < 1:
        raise ConfigurationError(f"subsample size must be >= 1, got {m}")
    total = len(triplets)
    if m >= total:
        return TripletSet(indices=triplets.indices.copy(), sigma=triplets.sigma)
    rng = np.random.default_rng(seed)
    pick = rng.choice(total, size=m, replace=False)
    pick.sort()
    return TripletSet(indices=triplets.indices[pick], sigma=triplets.sigma)
