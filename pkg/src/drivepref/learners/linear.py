"""Logistic regression and linear SVM on violation-score differences.

Both models are bias-free: the feature vector of a swapped pair is the
negation of the original, so the decision boundary must pass through the
origin and predictions stay antisymmetric.
"""
from __future__ import annotations

import numpy as np

from .base import (ModelSpec, TrainedModel, bce_loss, extract_xy, platt_fit,
                   register_model_kind, sigmoid)


def lr_loss_and_grad(w: np.ndarray, X: np.ndarray, y01: np.ndarray,
                     l2: float) -> tuple[float, np.ndarray]:
    """Mean BCE of the bias-free linear logit plus 0.5 * l2 * ||w||^2."""
    z = X @ w
    loss = bce_loss(z, y01) + 0.5 * l2 * float(w @ w)
    grad = X.T @ (sigmoid(z) - y01) / len(X) + l2 * w
    return loss, grad


class LRModel(TrainedModel):
    kind = "LR"

    def __init__(self, w: np.ndarray, metadata=None):
        super().__init__(metadata)
        self.w = np.asarray(w, dtype=float)

    def decision_values(self, X):
        return X @ self.w

    def confidence(self, x):
        z = self.decision_values(np.atleast_2d(np.asarray(x, dtype=float)))
        c = np.abs(2.0 * sigmoid(z) - 1.0)
        return float(c[0]) if np.asarray(x).ndim == 1 else c

    def state(self):
        return {"w": self.w.tolist()}


def train_lr(spec: ModelSpec, data) -> LRModel:
    X, y = extract_xy(data)
    hp = spec.hyperparameters
    l2 = float(hp.get("l2", 0.0))
    iters = int(hp.get("iters", 1000))
    lr = float(hp.get("lr", 0.1))
    y01 = (y + 1) / 2.0
    w = np.zeros(X.shape[1])
    for _ in range(iters):
        _, grad = lr_loss_and_grad(w, X, y01, l2)
        w -= lr * grad
    meta = {"grid": dict(hp), "seed": spec.seed, "iters": iters}
    return LRModel(w, meta)


class LSVMModel(TrainedModel):
    kind = "LSVM"

    def __init__(self, w: np.ndarray, platt: tuple[float, float], metadata=None):
        super().__init__(metadata)
        self.w = np.asarray(w, dtype=float)
        self.platt = (float(platt[0]), float(platt[1]))

    def decision_values(self, X):
        return X @ self.w

    def confidence(self, x):
        z = self.decision_values(np.atleast_2d(np.asarray(x, dtype=float)))
        a, b = self.platt
        c = np.abs(2.0 * sigmoid(a * z + b) - 1.0)
        return float(c[0]) if np.asarray(x).ndim == 1 else c

    def state(self):
        return {"w": self.w.tolist(), "platt": list(self.platt)}


def train_lsvm(spec: ModelSpec, data) -> LSVMModel:
    """Subgradient descent on mean hinge loss with L2 penalty 1/(2C) ||w||^2."""
    X, y = extract_xy(data)
    hp = spec.hyperparameters
    c = float(hp.get("C", 1.0))
    iters = int(hp.get("iters", 500))
    lr = float(hp.get("lr", 0.05))
    lam = 1.0 / c
    w = np.zeros(X.shape[1])
    for t in range(iters):
        z = X @ w
        viol = (y * z) < 1.0
        grad = lam * w - (X[viol].T @ y[viol]) / len(X)
        w -= (lr / (1.0 + 0.01 * t)) * grad
    platt = platt_fit(X @ w, y)
    meta = {"grid": dict(hp), "seed": spec.seed, "method": "subgradient"}
    return LSVMModel(w, platt, meta)


register_model_kind("LR", lambda st: LRModel(np.array(st["w"])))
register_model_kind("LSVM", lambda st: LSVMModel(np.array(st["w"]), tuple(st["platt"])))
