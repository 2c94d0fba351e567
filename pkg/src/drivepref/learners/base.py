"""Shared learner plumbing: specs, the trained-model interface, serialization."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..errors import CapabilityError, ValidationError

MODEL_KINDS = ("LR", "DT", "RF", "LSVM", "RBFSVM", "NN", "BN")
FORMAT_VERSION = 1


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    hyperparameters: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValidationError(f"unknown model kind {self.kind!r}")


class TrainedModel:
    """Base class: deterministic prediction, optional confidence, JSON state."""

    kind: str = "?"

    def __init__(self, metadata: dict | None = None):
        self.metadata = dict(metadata or {})

    # predict accepts a single 14-vector (returns int) or a matrix (returns array)
    def predict(self, x):
        x = np.asarray(x, dtype=float)
        if not np.all(np.isfinite(x)):
            raise ValidationError("non-finite features")
        single = x.ndim == 1
        z = self.decision_values(np.atleast_2d(x))
        labels = np.where(z >= 0, 1, -1).astype(int)
        return int(labels[0]) if single else labels

    def decision_values(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def confidence(self, x):
        """Certainty in [0, 1]: 0 = maximally unsure, 1 = certain."""
        raise CapabilityError(f"{self.kind} provides no confidence score")

    def state(self) -> dict:
        raise NotImplementedError

    def to_json(self) -> dict:
        return {"format_version": FORMAT_VERSION, "kind": self.kind,
                "metadata": self.metadata, "state": self.state()}


def extract_xy(data) -> tuple[np.ndarray, np.ndarray]:
    """Accepts a (X, y) pair or a sequence of LabeledPair-like objects."""
    if isinstance(data, tuple) and len(data) == 2:
        X, y = np.asarray(data[0], dtype=float), np.asarray(data[1])
    else:
        data = list(data)
        if not data:
            raise ValidationError("empty training data")
        X = np.array([p.features for p in data], dtype=float)
        y = np.array([p.label for p in data])
    if len(X) == 0:
        raise ValidationError("empty training data")
    if not np.all(np.isfinite(X)):
        raise ValidationError("non-finite features in training data")
    if not np.all(np.isin(y, (-1, 1))):
        raise ValidationError("labels must be +1 or -1")
    return X, y.astype(int)


_DESERIALIZERS: dict[str, callable] = {}


def register_model_kind(kind: str, from_state) -> None:
    _DESERIALIZERS[kind] = from_state


def serialize(model: TrainedModel) -> bytes:
    return json.dumps(model.to_json(), sort_keys=True).encode()


def deserialize(blob: bytes) -> TrainedModel:
    obj = json.loads(blob.decode())
    if obj.get("format_version") != FORMAT_VERSION:
        raise ValidationError(f"unsupported model format {obj.get('format_version')!r}")
    kind = obj["kind"]
    if kind not in _DESERIALIZERS:
        raise CapabilityError(f"unknown serialized model kind {kind!r}")
    model = _DESERIALIZERS[kind](obj["state"])
    model.metadata = obj.get("metadata", {})
    return model


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def bce_loss(z: np.ndarray, y01: np.ndarray) -> float:
    """Mean binary cross-entropy of logits z against {0,1} targets."""
    return float(np.mean(np.logaddexp(0.0, z) - y01 * z))


def platt_fit(z: np.ndarray, y: np.ndarray, iters: int = 100) -> tuple[float, float]:
    """Logistic calibration p = sigmoid(A z + B) with Platt's smoothed targets."""
    n_pos = int(np.sum(y > 0))
    n_neg = len(y) - n_pos
    t = np.where(y > 0, (n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0))
    a, b = 1.0, 0.0
    for _ in range(iters):
        p = sigmoid(a * z + b)
        g = p - t
        ga, gb = float(np.dot(g, z)), float(np.sum(g))
        w = p * (1 - p) + 1e-12
        haa = float(np.dot(w, z * z)) + 1e-12
        hab = float(np.dot(w, z))
        hbb = float(np.sum(w)) + 1e-12
        det = haa * hbb - hab * hab
        if abs(det) < 1e-300:
            break
        da = (hbb * ga - hab * gb) / det
        db = (haa * gb - hab * ga) / det
        a, b = a - da, b - db
        if abs(da) < 1e-10 and abs(db) < 1e-10:
            break
    return a, b
