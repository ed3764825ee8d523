"""Class balancers: fill every class up to the majority count.

All six methods share the same contract: the original rows come back
unchanged and in order as a prefix, synthetic rows are appended per class in
ascending class order, and a fixed seed reproduces the output bit for bit.
Per-class generation draws from an rng derived from (seed, class index), so
classes are independent streams.

Distances are plain Euclidean in the encoded [0,1] space; one-hot blocks
are not reweighted, which keeps every method comparable on the same
geometry.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import model as model_mod
from .errors import DataError, LabelError, ShapeError
from .nslkdd import EncodedDataset

Array = np.ndarray

logger = logging.getLogger(__name__)


@dataclass
class BalanceRequest:
    dataset: EncodedDataset
    seed: int = 0
    targets: Array | None = None  # per-class target counts; default: max count

    def resolved_targets(self, counts: Array) -> Array:
        if self.targets is None:
            return np.full_like(counts, counts.max())
        targets = np.asarray(self.targets, dtype=np.int64)
        if targets.shape != counts.shape:
            raise ShapeError(f"targets shape {targets.shape} does not match "
                             f"{counts.shape} classes")
        if np.any(targets < counts):
            raise DataError("target counts must be >= current counts for every class")
        return targets


def target_counts(counts: Array) -> Array:
    """Per-class deficits up to the majority count."""
    counts = np.asarray(counts, dtype=np.int64)
    if counts.size == 0:
        raise DataError("counts must be nonempty")
    return counts.max() - counts


def _class_counts(labels: Array, num_classes: int) -> Array:
    return np.bincount(labels, minlength=num_classes)


def _num_classes(dataset: EncodedDataset) -> int:
    if dataset.labels.size == 0:
        raise DataError("cannot balance an empty dataset")
    return int(dataset.labels.max()) + 1


def _class_rng(seed: int, label: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, label]))


def _finish(dataset: EncodedDataset, synthetic: list[tuple[Array, int]]) -> EncodedDataset:
    if not synthetic:
        return EncodedDataset(features=dataset.features.copy(),
                              labels=dataset.labels.copy(), schema=dataset.schema)
    rows = np.vstack([dataset.features] + [s for s, _ in synthetic])
    labels = np.concatenate(
        [dataset.labels] + [np.full(len(s), lab, dtype=np.int64) for s, lab in synthetic])
    return EncodedDataset(features=rows, labels=labels, schema=dataset.schema)


# ----------------------------------------------------------------------
# neighbor search, k-means and a linear SVM, all seeded and deterministic
# ----------------------------------------------------------------------

def _sq_dists(queries: Array, points: Array) -> Array:
    # ||a-b||^2 via the dot-product expansion; clip tiny negatives from rounding
    d2 = (np.sum(queries**2, axis=1)[:, None] + np.sum(points**2, axis=1)[None, :]
          - 2.0 * queries @ points.T)
    return np.maximum(d2, 0.0)


def _knn_indices(queries: Array, points: Array, k: int,
                 exclude_self: bool = False, chunk: int = 128) -> Array:
    """Indices of the k nearest ``points`` per query row, nearest first.

    ``exclude_self`` treats query i as points[i] (same array) and drops it.
    Deterministic for identical inputs; exact-distance ties order by point
    index within the selected k.
    """
    n = len(queries)
    k = min(k, len(points) - (1 if exclude_self else 0))
    out = np.empty((n, k), dtype=np.int64)
    for start in range(0, n, chunk):
        stop = min(n, start + chunk)
        d2 = _sq_dists(queries[start:stop], points)
        if exclude_self:
            d2[np.arange(stop - start), np.arange(start, stop)] = np.inf
        if k < d2.shape[1]:
            part = np.argpartition(d2, kth=k - 1, axis=1)[:, :k]
        else:
            part = np.broadcast_to(np.arange(d2.shape[1]), d2.shape).copy()
        sub = np.take_along_axis(d2, part, axis=1)
        order = np.lexsort((part, sub), axis=1)
        out[start:stop] = np.take_along_axis(part, order, axis=1)
    return out


def _drop_own_row(table: Array, own_positions: Array) -> Array:
    """Remove each query's own row from a (q x k+1) neighbor table.

    When the own row is not present (duplicates crowded it out), the farthest
    slot is dropped instead, so exactly k neighbors remain.
    """
    q, width = table.shape
    is_self = table == own_positions[:, None]
    drop = np.where(is_self.any(axis=1), is_self.argmax(axis=1), width - 1)
    keep = np.ones_like(table, dtype=bool)
    keep[np.arange(q), drop] = False
    return table[keep].reshape(q, width - 1)


def _kmeans(points: Array, n_clusters: int, rng: np.random.Generator,
            max_iter: int = 300) -> Array:
    """Seeded k-means++ assignment over rows; returns cluster index per row."""
    n = len(points)
    n_clusters = min(n_clusters, n)
    centers = np.empty((n_clusters, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    d2 = _sq_dists(points, centers[:1])[:, 0]
    for j in range(1, n_clusters):
        total = d2.sum()
        if total <= 0:
            centers[j] = points[rng.integers(n)]
        else:
            centers[j] = points[np.searchsorted(np.cumsum(d2 / total), rng.random())]
        d2 = np.minimum(d2, _sq_dists(points, centers[j:j + 1])[:, 0])
    assign = np.full(n, -1, dtype=np.int64)
    for _iteration in range(max_iter):
        new_assign = np.argmin(_sq_dists(points, centers), axis=1)
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for j in range(n_clusters):
            members = points[assign == j]
            if len(members):
                centers[j] = members.mean(axis=0)
    return assign


def _linear_svm_sgd(features: Array, signs: Array, penalty: float,
                    rng: np.random.Generator, epochs: int = 20) -> Array:
    """Soft-margin linear SVM by seeded stochastic subgradient descent.

    Schedule: lambda = 1/(penalty*n), step 1/(lambda*t), one shuffled pass
    per epoch, and the iterate average is returned (the raw last iterate is
    too noisy to define a stable margin). Weights are augmented; the last
    entry is the bias term.
    """
    n = len(features)
    augmented = np.hstack([features, np.ones((n, 1))])
    lam = 1.0 / (penalty * n)
    radius = 1.0 / np.sqrt(lam)  # the optimum lies inside this ball
    w = np.zeros(augmented.shape[1])
    w_sum = np.zeros_like(w)
    averaged = 0
    total = epochs * n
    t = 0
    for _ in range(epochs):
        for i in rng.permutation(n):
            t += 1
            eta = 1.0 / (lam * t)
            margin = signs[i] * (augmented[i] @ w)
            w *= 1.0 - eta * lam
            if margin < 1.0:
                w += eta * signs[i] * augmented[i]
            norm = np.linalg.norm(w)
            if norm > radius:
                w *= radius / norm
            if 2 * t > total:  # suffix average over the second half
                w_sum += w
                averaged += 1
    return w_sum / averaged


# ----------------------------------------------------------------------
# the balancers
# ----------------------------------------------------------------------

def random_oversample(request: BalanceRequest) -> EncodedDataset:
    """Duplicate existing rows of each deficient class uniformly with replacement."""
    dataset = request.dataset
    counts = _class_counts(dataset.labels, _num_classes(dataset))
    targets = request.resolved_targets(counts)
    synthetic = []
    for label in range(len(counts)):
        deficit = int(targets[label] - counts[label])
        if deficit == 0:
            continue
        if counts[label] == 0:
            raise DataError(f"class {label} has a deficit but no samples to copy")
        rows = dataset.features[dataset.labels == label]
        rng = _class_rng(request.seed, label)
        synthetic.append((rows[rng.integers(0, len(rows), size=deficit)], label))
    return _finish(dataset, synthetic)


def _interpolate(seeds: Array, neighbor_pool: Array, neighbor_table: Array,
                 deficit: int, rng: np.random.Generator) -> Array:
    """p + lambda*(q - p) with q one of p's tabled neighbors, lambda ~ U[0,1]."""
    k = neighbor_table.shape[1]
    seed_idx = rng.integers(0, len(seeds), size=deficit)
    nbr_slot = rng.integers(0, k, size=deficit)
    lam = rng.random(deficit)[:, None]
    p = seeds[seed_idx]
    q = neighbor_pool[neighbor_table[seed_idx, nbr_slot]]
    return p + lam * (q - p)


def _smote_one_class(rows: Array, deficit: int, k: int,
                     rng: np.random.Generator) -> Array:
    if len(rows) < 2:
        raise DataError("SMOTE needs at least 2 samples in a deficient class")
    k_eff = min(k, len(rows) - 1)
    table = _knn_indices(rows, rows, k_eff, exclude_self=True)
    return _interpolate(rows, rows, table, deficit, rng)


def smote(request: BalanceRequest, k: int = 5) -> EncodedDataset:
    """Classic interpolation between a class row and one of its k nearest
    same-class neighbors."""
    if k < 1:
        raise ShapeError(f"k must be >= 1, got {k}")
    dataset = request.dataset
    counts = _class_counts(dataset.labels, _num_classes(dataset))
    targets = request.resolved_targets(counts)
    synthetic = []
    for label in range(len(counts)):
        deficit = int(targets[label] - counts[label])
        if deficit == 0:
            continue
        rows = dataset.features[dataset.labels == label]
        rng = _class_rng(request.seed, label)
        synthetic.append((_smote_one_class(rows, deficit, k, rng), label))
    return _finish(dataset, synthetic)


def borderline_smote(request: BalanceRequest, k: int = 5, m: int = 10) -> EncodedDataset:
    """Borderline-1: seeds restricted to the DANGER set, i.e. minority rows
    whose m-neighborhood over all classes holds >= m/2 but < m other-class
    rows; interpolation stays toward same-class neighbors."""
    if k < 1 or m < 1:
        raise ShapeError(f"k and m must be >= 1, got k={k}, m={m}")
    dataset = request.dataset
    counts = _class_counts(dataset.labels, _num_classes(dataset))
    targets = request.resolved_targets(counts)
    synthetic = []
    for label in range(len(counts)):
        deficit = int(targets[label] - counts[label])
        if deficit == 0:
            continue
        mask = dataset.labels == label
        rows = dataset.features[mask]
        if len(rows) < 2:
            raise DataError("Borderline-SMOTE needs at least 2 samples in a "
                            "deficient class")
        m_eff = min(m, len(dataset.features) - 1)
        table = _knn_indices(rows, dataset.features, m_eff + 1)
        neighborhood = _drop_own_row(table, np.flatnonzero(mask))
        other_counts = (dataset.labels[neighborhood] != label).sum(axis=1)
        danger = (2 * other_counts >= m_eff) & (other_counts < m_eff)
        seeds = rows[danger]
        rng = _class_rng(request.seed, label)
        if len(seeds) == 0:
            logger.info("borderline_smote: DANGER set empty for class %d, "
                        "falling back to plain SMOTE", label)
            synthetic.append((_smote_one_class(rows, deficit, k, rng), label))
            continue
        k_eff = min(k, len(rows) - 1)
        table = _knn_indices(seeds, rows, k_eff + 1)
        table = _drop_own_row(table, np.flatnonzero(danger))
        synthetic.append((_interpolate(seeds, rows, table, deficit, rng), label))
    return _finish(dataset, synthetic)


def kmeans_smote(request: BalanceRequest, k: int = 5, n_clusters: int = 8,
                 imbalance_threshold: float = 0.5) -> EncodedDataset:
    """SMOTE restricted to k-means clusters where the class's fraction exceeds
    the threshold; the deficit is apportioned proportionally to each eligible
    cluster's minority density (members / mean pairwise distance)."""
    if k < 1 or n_clusters < 1:
        raise ShapeError(f"k and n_clusters must be >= 1, got k={k}, "
                         f"n_clusters={n_clusters}")
    dataset = request.dataset
    counts = _class_counts(dataset.labels, _num_classes(dataset))
    targets = request.resolved_targets(counts)
    synthetic = []
    for label in range(len(counts)):
        deficit = int(targets[label] - counts[label])
        if deficit == 0:
            continue
        rows = dataset.features[dataset.labels == label]
        if len(rows) < 2:
            raise DataError("KMeans-SMOTE needs at least 2 samples in a "
                            "deficient class")
        rng = _class_rng(request.seed, label)
        assign = _kmeans(dataset.features, n_clusters, rng)
        member_assign = assign[dataset.labels == label]
        eligible = []
        for cluster in range(assign.max() + 1):
            size = int(np.sum(assign == cluster))
            members = rows[member_assign == cluster]
            if size == 0 or len(members) < 2:
                continue
            fraction = len(members) / size
            if fraction > imbalance_threshold:
                spread = np.sqrt(_sq_dists(members, members))
                mean_dist = spread.sum() / (len(members) * (len(members) - 1))
                density = len(members) / (mean_dist + 1e-12)
                eligible.append((members, density))
        if not eligible:
            logger.info("kmeans_smote: no eligible cluster for class %d, "
                        "falling back to plain SMOTE", label)
            synthetic.append((_smote_one_class(rows, deficit, k, rng), label))
            continue
        weights = np.array([d for _, d in eligible])
        shares = _apportion(deficit, weights / weights.sum())
        parts = []
        for (members, _), share in zip(eligible, shares):
            if share == 0:
                continue
            parts.append(_smote_one_class(members, share, k, rng))
        synthetic.append((np.vstack(parts), label))
    return _finish(dataset, synthetic)


def _apportion(total: int, fractions: Array) -> Array:
    """Largest-remainder split of ``total`` into integer shares."""
    raw = fractions * total
    shares = np.floor(raw).astype(np.int64)
    remainder = total - shares.sum()
    if remainder > 0:
        order = np.argsort(-(raw - shares), kind="stable")
        shares[order[:remainder]] += 1
    return shares


def svm_smote(request: BalanceRequest, k: int = 5, penalty: float = 1.0) -> EncodedDataset:
    """SMOTE seeded from the class's support vectors of a one-vs-rest linear
    SVM (rows on or inside the margin); interpolation toward same-class
    neighbors only (no extrapolation)."""
    if k < 1:
        raise ShapeError(f"k must be >= 1, got {k}")
    if penalty <= 0:
        raise ShapeError(f"penalty must be positive, got {penalty}")
    dataset = request.dataset
    counts = _class_counts(dataset.labels, _num_classes(dataset))
    targets = request.resolved_targets(counts)
    synthetic = []
    for label in range(len(counts)):
        deficit = int(targets[label] - counts[label])
        if deficit == 0:
            continue
        mask = dataset.labels == label
        rows = dataset.features[mask]
        if len(rows) < 2 or int(np.sum(~mask)) < 2:
            raise DataError("SVM-SMOTE needs at least 2 samples on each side "
                            "of the one-vs-rest split")
        rng = _class_rng(request.seed, label)
        signs = np.where(mask, 1.0, -1.0)
        w = _linear_svm_sgd(dataset.features, signs, penalty, rng)
        margins = np.hstack([rows, np.ones((len(rows), 1))]) @ w
        support = margins <= 1.0 + 1e-12
        seeds = rows[support]
        if len(seeds) == 0:
            logger.info("svm_smote: no support vectors for class %d, "
                        "falling back to plain SMOTE", label)
            synthetic.append((_smote_one_class(rows, deficit, k, rng), label))
            continue
        k_eff = min(k, len(rows) - 1)
        table = _knn_indices(seeds, rows, k_eff + 1)
        table = _drop_own_row(table, np.flatnonzero(support))
        synthetic.append((_interpolate(seeds, rows, table, deficit, rng), label))
    return _finish(dataset, synthetic)


def generative_balance(request: BalanceRequest,
                       checkpoint: model_mod.Checkpoint) -> EncodedDataset:
    """Fill deficits with model-generated rows, kept in encoded space."""
    dataset = request.dataset
    if checkpoint.schema_fingerprint != dataset.schema.fingerprint:
        raise DataError("checkpoint was trained against a different encoding "
                        f"schema (checkpoint {checkpoint.schema_fingerprint[:12]}..., "
                        f"dataset {dataset.schema.fingerprint[:12]}...)")
    counts = _class_counts(dataset.labels, _num_classes(dataset))
    if len(counts) > checkpoint.config.num_classes:
        raise LabelError("dataset holds labels outside the checkpoint's classes")
    targets = request.resolved_targets(counts)
    synthetic = []
    for label in range(len(counts)):
        deficit = int(targets[label] - counts[label])
        if deficit == 0:
            continue
        rng = _class_rng(request.seed, label)
        synthetic.append((model_mod.generate(label, deficit, checkpoint, rng), label))
    return _finish(dataset, synthetic)


BALANCERS = {
    "random": random_oversample,
    "smote": smote,
    "borderline_smote": borderline_smote,
    "kmeans_smote": kmeans_smote,
    "svm_smote": svm_smote,
}
