"""One-hidden-layer network with tanh units and a sigmoid output, BCE loss."""
from __future__ import annotations

import numpy as np

from .base import (ModelSpec, TrainedModel, bce_loss, extract_xy,
                   register_model_kind, sigmoid)


def pack(W1, b1, w2, b2) -> np.ndarray:
    return np.concatenate([W1.ravel(), b1, w2, [b2]])


def unpack(theta: np.ndarray, n_in: int, hidden: int):
    k = hidden * n_in
    W1 = theta[:k].reshape(hidden, n_in)
    b1 = theta[k:k + hidden]
    w2 = theta[k + hidden:k + 2 * hidden]
    b2 = float(theta[-1])
    return W1, b1, w2, b2


def nn_loss_and_grad(theta: np.ndarray, X: np.ndarray, y01: np.ndarray,
                     l2: float, hidden: int) -> tuple[float, np.ndarray]:
    """Mean BCE + 0.5 * l2 * (||W1||^2 + ||w2||^2); biases unregularized."""
    n, n_in = X.shape
    W1, b1, w2, b2 = unpack(theta, n_in, hidden)
    H = np.tanh(X @ W1.T + b1)
    z = H @ w2 + b2
    loss = bce_loss(z, y01) + 0.5 * l2 * (float(np.sum(W1 * W1)) + float(w2 @ w2))
    dz = (sigmoid(z) - y01) / n
    gw2 = H.T @ dz + l2 * w2
    gb2 = float(np.sum(dz))
    dH = np.outer(dz, w2) * (1.0 - H * H)
    gW1 = dH.T @ X + l2 * W1
    gb1 = dH.sum(axis=0)
    return loss, pack(gW1, gb1, gw2, gb2)


class NNModel(TrainedModel):
    kind = "NN"

    def __init__(self, W1, b1, w2, b2, metadata=None):
        super().__init__(metadata)
        self.W1 = np.asarray(W1, dtype=float)
        self.b1 = np.asarray(b1, dtype=float)
        self.w2 = np.asarray(w2, dtype=float)
        self.b2 = float(b2)

    def decision_values(self, X):
        H = np.tanh(np.atleast_2d(X) @ self.W1.T + self.b1)
        return H @ self.w2 + self.b2

    def confidence(self, x):
        z = self.decision_values(np.atleast_2d(np.asarray(x, dtype=float)))
        c = np.abs(2.0 * sigmoid(z) - 1.0)
        return float(c[0]) if np.asarray(x).ndim == 1 else c

    def state(self):
        return {"W1": self.W1.tolist(), "b1": self.b1.tolist(),
                "w2": self.w2.tolist(), "b2": self.b2}


def train_nn(spec: ModelSpec, data) -> NNModel:
    X, y = extract_xy(data)
    hp = spec.hyperparameters
    hidden = int(hp.get("hidden", 16))
    epochs = int(hp.get("epochs", 200))
    lr = float(hp.get("lr", 1e-2))
    l2 = float(hp.get("l2", 0.0))
    y01 = (y + 1) / 2.0
    rng = np.random.default_rng(spec.seed)
    n_in = X.shape[1]
    scale1 = np.sqrt(2.0 / (n_in + hidden))
    theta = pack(rng.normal(0.0, scale1, (hidden, n_in)),
                 np.zeros(hidden),
                 rng.normal(0.0, np.sqrt(2.0 / (hidden + 1)), hidden),
                 0.0)
    for _ in range(epochs):
        _, grad = nn_loss_and_grad(theta, X, y01, l2, hidden)
        theta -= lr * grad
    W1, b1, w2, b2 = unpack(theta, n_in, hidden)
    return NNModel(W1, b1, w2, b2, {"grid": dict(hp), "seed": spec.seed,
                                    "activation": "tanh"})


register_model_kind("NN", lambda st: NNModel(
    np.array(st["W1"]), np.array(st["b1"]), np.array(st["w2"]), st["b2"]))
