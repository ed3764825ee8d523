"""CART-style decision tree with the Gini criterion.

Deterministic by construction, so the downstream evaluation is seed-free:
candidate thresholds are midpoints between consecutive distinct sorted
values, ties in gain break toward the lower feature index and then the
lower threshold, values equal to a threshold route left, and leaves predict
the histogram argmax (ties to the lowest class index).

Gain gating: a split needs gain > min_gain when min_gain is positive; at
the default min_gain = 0 zero-gain splits of impure nodes are accepted,
which is what lets parity-style data (XOR corners) and any distinct-row
dataset reach purity.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DataError, ShapeError

Array = np.ndarray


@dataclass
class TreeParams:
    max_depth: int | None = None  # None: unlimited
    min_samples_split: int = 2
    min_gain: float = 0.0

    def __post_init__(self):
        if self.min_samples_split < 2:
            raise ShapeError(f"min_samples_split must be >= 2, "
                             f"got {self.min_samples_split}")
        if self.max_depth is not None and self.max_depth < 0:
            raise ShapeError(f"max_depth must be None or >= 0, got {self.max_depth}")
        if self.min_gain < 0:
            raise ShapeError(f"min_gain must be >= 0, got {self.min_gain}")


@dataclass
class TreeNode:
    histogram: Array
    prediction: int
    feature: int | None = None
    threshold: float | None = None
    left: Optional["TreeNode"] = None
    right: Optional["TreeNode"] = None
    n_features: int | None = None  # set on the root by fit()

    @property
    def is_leaf(self) -> bool:
        return self.feature is None

    def depth(self) -> int:
        if self.is_leaf:
            return 0
        return 1 + max(self.left.depth(), self.right.depth())

    def node_count(self) -> int:
        if self.is_leaf:
            return 1
        return 1 + self.left.node_count() + self.right.node_count()


def gini(counts: Array) -> float:
    """1 - sum of squared class fractions."""
    counts = np.asarray(counts, dtype=np.float64)
    if np.any(counts < 0):
        raise DataError("class counts must be nonnegative")
    total = counts.sum()
    if total == 0:
        raise DataError("gini is undefined for all-zero counts")
    fractions = counts / total
    return float(1.0 - np.sum(fractions**2))


def best_split(features: Array, labels: Array,
               params: TreeParams | None = None) -> tuple[int, float, float] | None:
    """Exhaustive scan for the (feature, midpoint threshold, gain) maximizing
    the Gini decrease; None when no admissible split exists."""
    params = params or TreeParams()
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n = len(labels)
    if n < params.min_samples_split:
        return None
    classes = labels.max() + 1
    total_counts = np.bincount(labels, minlength=classes).astype(np.float64)
    if np.count_nonzero(total_counts) <= 1:
        return None  # pure node
    parent = 1.0 - np.sum((total_counts / n) ** 2)
    one_hot = np.zeros((n, classes))
    one_hot[np.arange(n), labels] = 1.0

    best: tuple[int, float, float] | None = None
    for f in range(features.shape[1]):
        col = features[:, f]
        order = np.argsort(col, kind="stable")
        sorted_vals = col[order]
        boundaries = np.flatnonzero(sorted_vals[1:] > sorted_vals[:-1])
        if boundaries.size == 0:
            continue  # constant feature
        cum = np.cumsum(one_hot[order], axis=0)
        left_counts = cum[boundaries]
        right_counts = total_counts - left_counts
        n_left = (boundaries + 1).astype(np.float64)
        n_right = n - n_left
        gini_left = 1.0 - np.sum((left_counts / n_left[:, None]) ** 2, axis=1)
        gini_right = 1.0 - np.sum((right_counts / n_right[:, None]) ** 2, axis=1)
        gains = parent - (n_left / n) * gini_left - (n_right / n) * gini_right
        gains = np.maximum(gains, 0.0)  # clip float noise; true gain is >= 0
        j = int(np.argmax(gains))  # first maximum: lowest threshold wins ties
        if best is None or gains[j] > best[2]:
            threshold = 0.5 * (sorted_vals[boundaries[j]] + sorted_vals[boundaries[j] + 1])
            best = (f, float(threshold), float(gains[j]))
    if best is None:
        return None
    if params.min_gain > 0 and best[2] <= params.min_gain:
        return None
    return best


def fit(features: Array, labels: Array, params: TreeParams | None = None) -> TreeNode:
    """Grow a tree by recursive splitting until the stop conditions hold."""
    params = params or TreeParams()
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if features.ndim != 2:
        raise ShapeError(f"features must be 2-D, got shape {features.shape}")
    n = features.shape[0]
    if n == 0:
        raise DataError("cannot fit a tree on an empty training set")
    if labels.shape != (n,):
        raise ShapeError(f"labels shape {labels.shape} does not match {n} rows")
    classes = int(labels.max()) + 1

    def make_leaf(idx: Array) -> TreeNode:
        histogram = np.bincount(labels[idx], minlength=classes)
        return TreeNode(histogram=histogram, prediction=int(np.argmax(histogram)))

    root = make_leaf(np.arange(n))
    root.n_features = features.shape[1]
    # explicit stack: trees on memorization-grade data outgrow the recursion limit
    stack: list[tuple[TreeNode, Array, int]] = [(root, np.arange(n), 0)]
    while stack:
        node, idx, depth = stack.pop()
        if params.max_depth is not None and depth >= params.max_depth:
            continue
        found = best_split(features[idx], labels[idx], params)
        if found is None:
            continue
        feature, threshold, _gain = found
        node.feature = feature
        node.threshold = threshold
        go_left = features[idx, feature] <= threshold
        left_idx, right_idx = idx[go_left], idx[~go_left]
        node.left = make_leaf(left_idx)
        node.right = make_leaf(right_idx)
        stack.append((node.left, left_idx, depth + 1))
        stack.append((node.right, right_idx, depth + 1))
    return root


def predict(tree: TreeNode, rows: Array) -> Array:
    """Route every row root-to-leaf (value <= threshold goes left)."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2:
        raise ShapeError(f"rows must be 2-D, got shape {rows.shape}")
    _check_width(tree, rows.shape[1])
    out = np.empty(rows.shape[0], dtype=np.int64)
    stack: list[tuple[TreeNode, Array]] = [(tree, np.arange(rows.shape[0]))]
    while stack:
        node, idx = stack.pop()
        if idx.size == 0:
            continue
        if node.is_leaf:
            out[idx] = node.prediction
            continue
        go_left = rows[idx, node.feature] <= node.threshold
        stack.append((node.left, idx[go_left]))
        stack.append((node.right, idx[~go_left]))
    return out


def _check_width(tree: TreeNode, width: int) -> None:
    if tree.n_features is not None:
        if width != tree.n_features:
            raise ShapeError(f"tree was fit on {tree.n_features}-wide rows, "
                             f"got {width}")
        return
    # hand-built trees carry no training width; validate references instead
    stack = [tree]
    while stack:
        node = stack.pop()
        if node.is_leaf:
            continue
        if node.feature >= width:
            raise ShapeError(f"tree references feature {node.feature} but rows "
                             f"have only {width} columns")
        stack.extend((node.left, node.right))


def export_text(tree: TreeNode) -> str:
    """Pre-order dump, one node per line, indented by depth."""
    lines: list[str] = []
    stack: list[tuple[TreeNode, int]] = [(tree, 0)]
    while stack:
        node, depth = stack.pop()
        pad = "  " * depth
        if node.is_leaf:
            lines.append(f"{pad}leaf class={node.prediction} "
                         f"counts={node.histogram.tolist()}")
        else:
            lines.append(f"{pad}split feature={node.feature} "
                         f"threshold={node.threshold!r}")
            stack.append((node.right, depth + 1))
            stack.append((node.left, depth + 1))
    return "\n".join(lines) + "\n"
