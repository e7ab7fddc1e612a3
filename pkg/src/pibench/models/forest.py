"""Random forest: CART trees on bootstrap samples, Gini splits, per-split
feature subsampling, predictions averaged over leaf class frequencies."""
from __future__ import annotations

import numpy as np

from .._rng import stream, substream_seed
from . import tree as treelib
from .logistic import check_labels


class ForestModel:
    kind = "forest"

    def __init__(self, trees, indices, hp, n_features):
        self.trees = list(trees)
        self.indices = np.asarray(indices, dtype=np.int64)
        self.hp = dict(hp)
        self.n_features = int(n_features)

    def predict_proba(self, X):
        """Mean leaf frequency, accumulated in tree-index order so the result
        is independent of the in-memory ordering of the trees."""
        xt = np.ascontiguousarray(np.asarray(X, dtype=np.float64).T)
        acc = np.zeros(xt.shape[1], dtype=np.float64)
        for k in np.argsort(self.indices):
            acc += self.trees[k].predict(xt)
        return acc / len(self.trees)

    def to_dict(self):
        order = np.argsort(self.indices)
        return {
            "kind": self.kind,
            "hp": self.hp,
            "n_features": self.n_features,
            "trees": treelib.serialize_trees([self.trees[k] for k in order]),
        }

    @classmethod
    def from_dict(cls, d):
        trees = treelib.deserialize_trees(d["trees"])
        return cls(trees, np.arange(len(trees)), d["hp"], d["n_features"])


def train_forest(X, y, hp, seed) -> ForestModel:
    """hp: n_trees, max_depth (int or None), min_leaf,
    feature_fraction in {"sqrt", 0.5, "all"}."""
    X = np.asarray(X, dtype=np.float64)
    y = check_labels(y)
    n, f = X.shape
    xt = np.ascontiguousarray(X.T)
    p_full = treelib.presort(xt)
    k_feat = treelib.resolve_feature_count(hp["feature_fraction"], f)
    h = np.ones(n, dtype=np.float64)

    n_trees = int(hp["n_trees"])
    trees = [None] * n_trees
    for i in range(n_trees):
        rng = stream(seed, "forest", i)
        counts = np.bincount(rng.integers(0, n, size=n), minlength=n)
        trees[i] = treelib.grow(
            xt, p_full, counts, y, h,
            hp["max_depth"], hp["min_leaf"], k_feat,
            substream_seed(seed, "forest", i, "feats"))
    return ForestModel(trees, np.arange(n_trees), hp, f)
