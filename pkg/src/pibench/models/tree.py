"""Shared binary-tree structure for the forest and boosting models.

Trees are grown by the kernel backend on presorted feature columns and stored
as flat preorder arrays. The split proxy maximized by the kernel is
sum_side (S_side^2 / n_side): with per-row numerator s = y it is equivalent to
the Gini impurity decrease, with s = residual it is the variance-reduction
criterion. Leaf values are S / (H + 1e-16) over the leaf's rows, so h = 1
yields class frequencies and h = sigmoid hessians yields Newton steps.
"""
from __future__ import annotations

import numpy as np

from .. import kernels


class Tree:
    __slots__ = ("feature", "threshold", "left", "right", "value", "count")

    def __init__(self, nodes: dict):
        self.feature = np.asarray(nodes["feature"], dtype=np.int32)
        self.threshold = np.asarray(nodes["threshold"], dtype=np.float64)
        self.left = np.asarray(nodes["left"], dtype=np.int32)
        self.right = np.asarray(nodes["right"], dtype=np.int32)
        self.value = np.asarray(nodes["value"], dtype=np.float64)
        self.count = np.asarray(nodes["count"], dtype=np.int32)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    def predict(self, xt: np.ndarray) -> np.ndarray:
        """Leaf value for every column of the (features, rows) matrix."""
        return kernels.apply_tree(np.ascontiguousarray(xt), self.feature,
                                  self.threshold, self.left, self.right,
                                  self.value)


def presort(xt: np.ndarray) -> np.ndarray:
    """Stable per-feature argsort of a (features, rows) matrix, computed once
    per training matrix and reused by every tree grown on a row subset."""
    return np.argsort(xt, axis=1, kind="stable").astype(np.int32)


def grow(xt, p_full, counts, s, h, max_depth, min_leaf, k_features, seed) -> Tree:
    """Grow one tree on the row multiset given by `counts`.

    xt: (f, n) float64 C-contiguous; p_full: presort(xt); counts: per-row
    multiplicity (bootstrap counts or a 0/1 subsample mask); s, h: length-n
    split numerators and leaf denominators.
    """
    p = kernels.expand_presort(p_full, np.asarray(counts, dtype=np.int32))
    nodes = kernels.grow_tree(
        np.ascontiguousarray(xt, dtype=np.float64), p,
        np.ascontiguousarray(s, dtype=np.float64),
        np.ascontiguousarray(h, dtype=np.float64),
        max_depth, int(min_leaf), int(k_features), int(seed))
    return Tree(nodes)


def resolve_feature_count(setting, n_features: int) -> int:
    """Map a features-per-split setting {sqrt, 0.5, all} to a count."""
    if setting == "sqrt":
        return max(1, int(round(np.sqrt(n_features))))
    if setting == "all":
        return n_features
    frac = float(setting)
    return max(1, int(round(frac * n_features)))


def gini_impurity(y) -> float:
    """2 p (1-p) for binary labels; test oracle for split quality."""
    y = np.asarray(y, dtype=np.float64)
    if len(y) == 0:
        return 0.0
    p = float(np.mean(y))
    return 2.0 * p * (1.0 - p)


def gini_gain(y_parent, y_left, y_right) -> float:
    """Impurity decrease of a candidate split, weighted by side sizes."""
    n = len(y_parent)
    wl = len(y_left) / n
    wr = len(y_right) / n
    return gini_impurity(y_parent) - wl * gini_impurity(y_left) \
        - wr * gini_impurity(y_right)


def serialize_trees(trees) -> list:
    """Compact columnar text encoding, one dict of comma-joined fields per
    tree. Keeps large forests' artifacts tractable while staying inside a
    structured text file; repr round-trips every float exactly."""
    out = []
    for t in trees:
        out.append({
            "feature": ",".join(str(int(v)) for v in t.feature),
            "threshold": ",".join(repr(float(v)) for v in t.threshold),
            "left": ",".join(str(int(v)) for v in t.left),
            "right": ",".join(str(int(v)) for v in t.right),
            "value": ",".join(repr(float(v)) for v in t.value),
            "count": ",".join(str(int(v)) for v in t.count),
        })
    return out


def deserialize_trees(payload) -> list:
    trees = []
    for item in payload:
        nodes = {
            "feature": np.array(item["feature"].split(","), dtype=np.int32),
            "threshold": np.array(item["threshold"].split(","), dtype=np.float64),
            "left": np.array(item["left"].split(","), dtype=np.int32),
            "right": np.array(item["right"].split(","), dtype=np.int32),
            "value": np.array(item["value"].split(","), dtype=np.float64),
            "count": np.array(item["count"].split(","), dtype=np.int32),
        }
        trees.append(Tree(nodes))
    return trees
