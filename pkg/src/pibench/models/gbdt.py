"""Gradient-boosted trees for log-loss: each round fits a regression tree to
the residual y - p (variance splits), leaf values take a Newton step
sum(residual) / (sum(hessian) + 1e-16), and rounds accumulate with shrinkage
from a prevalence log-odds baseline."""
from __future__ import annotations

import logging

import numpy as np

from .._rng import stream
from . import tree as treelib
from .logistic import check_labels, log_loss, sigmoid

log = logging.getLogger(__name__)

_MIN_LEAF = 1  # structural floor; depth <= 6 already bounds leaf count


class GBDTModel:
    kind = "gbdt"

    def __init__(self, base_score, trees, hp, n_features, loss_history):
        self.base_score = float(base_score)
        self.trees = list(trees)
        self.hp = dict(hp)
        self.n_features = int(n_features)
        self.loss_history = list(loss_history)

    def decision(self, X):
        xt = np.ascontiguousarray(np.asarray(X, dtype=np.float64).T)
        F = np.full(xt.shape[1], self.base_score, dtype=np.float64)
        lr = float(self.hp["learning_rate"])
        for t in self.trees:
            F += lr * t.predict(xt)
        return F

    def predict_proba(self, X):
        return sigmoid(self.decision(X))

    def to_dict(self):
        return {
            "kind": self.kind,
            "hp": self.hp,
            "n_features": self.n_features,
            "base_score": repr(self.base_score),
            "loss_history": [repr(v) for v in self.loss_history],
            "trees": treelib.serialize_trees(self.trees),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["base_score"]), treelib.deserialize_trees(d["trees"]),
                   d["hp"], d["n_features"],
                   [float(v) for v in d["loss_history"]])


def train_gbdt(X, y, hp, seed) -> GBDTModel:
    """hp: n_rounds, max_depth, learning_rate, subsample (row fraction)."""
    X = np.asarray(X, dtype=np.float64)
    y = check_labels(y)
    n, f = X.shape
    xt = np.ascontiguousarray(X.T)
    p_full = treelib.presort(xt)

    n_rounds = int(hp["n_rounds"])
    lr = float(hp["learning_rate"])
    q = float(hp["subsample"])
    prevalence = float(np.mean(y))
    base = float(np.log(prevalence / (1.0 - prevalence)))

    F = np.full(n, base, dtype=np.float64)
    history = [log_loss(F, y)]
    trees = []
    ones = np.ones(n, dtype=np.int32)
    for r in range(n_rounds):
        p = sigmoid(F)
        resid = y - p
        hess = p * (1.0 - p)
        if q >= 1.0:
            counts = ones
        else:
            k = max(1, int(round(q * n)))
            idx = stream(seed, "round", r).permutation(n)[:k]
            counts = np.zeros(n, dtype=np.int32)
            counts[idx] = 1
        t = treelib.grow(xt, p_full, counts, resid, hess,
                         hp["max_depth"], _MIN_LEAF, f, 0)
        F += lr * t.predict(xt)
        trees.append(t)
        loss = log_loss(F, y)
        # Newton leaves with shrinkage <= 1 keep full-data training loss
        # non-increasing; subsampled rounds may wobble and are not checked
        if q >= 1.0 and loss > history[-1] + 1e-9:
            log.warning("round %d: training loss rose %.3e -> %.3e",
                        r, history[-1], loss)
        history.append(loss)
    return GBDTModel(base, trees, hp, f, history)
