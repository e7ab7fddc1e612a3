"""L2-regularized logistic regression, trained by deterministic full-batch
gradient descent with Armijo backtracking. No stochasticity: at this scale
reproducibility is worth more than epoch speed, and the fitted weights are a
pure function of (X, y, hyperparameters)."""
from __future__ import annotations

import numpy as np

DEFAULT_MAX_ITER = 500
DEFAULT_TOL = 1e-6
_ARMIJO_C = 1e-4
_MAX_HALVINGS = 60


class DegenerateLabels(ValueError):
    pass


def check_labels(y):
    y = np.asarray(y, dtype=np.float64)
    if y.sum() == 0 or y.sum() == len(y):
        raise DegenerateLabels("degenerate labels: need at least one example "
                               "of each class")
    return y


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def log_loss(z, y):
    """Mean log-loss from raw scores; logaddexp keeps large |z| finite."""
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


class LogisticModel:
    kind = "logistic"

    def __init__(self, weights, intercept, lam, n_iter, converged):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.intercept = float(intercept)
        self.lam = float(lam)
        self.n_iter = int(n_iter)
        self.converged = bool(converged)

    def decision(self, X):
        return X @ self.weights + self.intercept

    def predict_proba(self, X):
        return sigmoid(self.decision(X))

    def to_dict(self):
        return {
            "kind": self.kind,
            "weights": [repr(float(w)) for w in self.weights],
            "intercept": repr(self.intercept),
            "lam": repr(self.lam),
            "n_iter": self.n_iter,
            "converged": self.converged,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(np.array([float(w) for w in d["weights"]], dtype=np.float64),
                   float(d["intercept"]), float(d["lam"]),
                   d["n_iter"], d["converged"])


def objective_and_gradient(X, y, w, b, lam):
    """Mean log-loss + (lam/2)||w||^2; the intercept is not penalized."""
    z = X @ w + b
    obj = log_loss(z, y) + 0.5 * lam * float(w @ w)
    p = sigmoid(z)
    resid = p - y
    n = len(y)
    gw = X.T @ resid / n + lam * w
    gb = float(np.sum(resid) / n)
    return obj, gw, gb


def train_logistic(X, y, hp, seed=0) -> LogisticModel:
    """hp: {"lam": float}; `seed` is accepted for interface uniformity but
    unused (the optimizer is deterministic)."""
    X = np.asarray(X, dtype=np.float64)
    y = check_labels(y)
    lam = float(hp["lam"])
    max_iter = int(hp.get("max_iter", DEFAULT_MAX_ITER))
    tol = float(hp.get("tol", DEFAULT_TOL))

    n, f = X.shape
    w = np.zeros(f, dtype=np.float64)
    b = 0.0
    obj, gw, gb = objective_and_gradient(X, y, w, b, lam)
    step = 1.0
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        gnorm = max(float(np.max(np.abs(gw))) if f else 0.0, abs(gb))
        if gnorm <= tol:
            converged = True
            it -= 1
            break
        gsq = float(gw @ gw) + gb * gb
        t = min(step * 2.0, 1e6)  # warm-started backtracking
        accepted = False
        for _ in range(_MAX_HALVINGS):
            w_new = w - t * gw
            b_new = b - t * gb
            z = X @ w_new + b_new
            obj_new = log_loss(z, y) + 0.5 * lam * float(w_new @ w_new)
            if obj_new <= obj - _ARMIJO_C * t * gsq:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        step = t
        w, b = w_new, b_new
        obj, gw, gb = objective_and_gradient(X, y, w, b, lam)
    return LogisticModel(w, b, lam, it, converged)
