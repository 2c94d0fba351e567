"""Seven preference classifiers over 14-dimensional violation-score differences.

Every kind trains deterministically from (spec, seed, data), predicts a hard
+1/-1 label (exact ties at the decision boundary break to +1), and exposes a
confidence score in [0, 1] plus JSON round-trip serialization.
"""
from .base import (MODEL_KINDS, ModelSpec, TrainedModel, deserialize,
                   extract_xy, serialize, sigmoid)
from .bayes import (BNModel, binarize, chow_liu_parents,
                    conditional_mutual_information, train_bn)
from .grids import load_grids
from .kernel import RBFSVMModel, rbf_kernel, train_rbfsvm
from .linear import LRModel, LSVMModel, lr_loss_and_grad, train_lr, train_lsvm
from .neural import NNModel, nn_loss_and_grad, train_nn
from .trees import DTModel, RFModel, best_gini_split, train_dt, train_rf

_TRAINERS = {
    "LR": train_lr,
    "DT": train_dt,
    "RF": train_rf,
    "LSVM": train_lsvm,
    "RBFSVM": train_rbfsvm,
    "NN": train_nn,
    "BN": train_bn,
}


def train(spec: ModelSpec, data) -> TrainedModel:
    """Train a model of `spec.kind` on labeled pairs (or an (X, y) tuple)."""
    return _TRAINERS[spec.kind](spec, data)


def predict(model: TrainedModel, x):
    return model.predict(x)


def confidence(model: TrainedModel, x):
    return model.confidence(x)


__all__ = [
    "MODEL_KINDS", "ModelSpec", "TrainedModel", "train", "predict", "confidence",
    "serialize", "deserialize", "load_grids", "extract_xy", "sigmoid",
    "LRModel", "LSVMModel", "DTModel", "RFModel", "RBFSVMModel", "NNModel",
    "BNModel", "lr_loss_and_grad", "nn_loss_and_grad", "best_gini_split",
    "rbf_kernel", "binarize", "chow_liu_parents", "conditional_mutual_information",
    "train_lr", "train_dt", "train_rf", "train_lsvm", "train_rbfsvm", "train_nn",
    "train_bn",
]
