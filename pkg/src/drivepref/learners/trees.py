"""Decision trees (gini, single-feature splits) and bagged random forests."""
from __future__ import annotations

import numpy as np

from .base import ModelSpec, TrainedModel, extract_xy, register_model_kind

_LEAF = -1


class _Tree:
    """Flat-array binary tree; left branch takes x[feature] <= threshold."""

    def __init__(self):
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.label: list[int] = []
        self.purity: list[float] = []

    def _new_node(self) -> int:
        self.feature.append(_LEAF)
        self.threshold.append(0.0)
        self.left.append(_LEAF)
        self.right.append(_LEAF)
        self.label.append(1)
        self.purity.append(1.0)
        return len(self.feature) - 1

    def depth(self, node: int = 0, d: int = 0) -> int:
        if self.feature[node] == _LEAF:
            return d
        return max(self.depth(self.left[node], d + 1),
                   self.depth(self.right[node], d + 1))

    def apply(self, X: np.ndarray) -> np.ndarray:
        leaf_of = np.zeros(len(X), dtype=int)
        stack = [(0, np.arange(len(X)))]
        while stack:
            node, rows = stack.pop()
            if len(rows) == 0:
                continue
            f = self.feature[node]
            if f == _LEAF:
                leaf_of[rows] = node
                continue
            go_left = X[rows, f] <= self.threshold[node]
            stack.append((self.left[node], rows[go_left]))
            stack.append((self.right[node], rows[~go_left]))
        return leaf_of

    def to_state(self) -> dict:
        return {"feature": self.feature, "threshold": self.threshold,
                "left": self.left, "right": self.right,
                "label": self.label, "purity": self.purity}

    @classmethod
    def from_state(cls, st: dict) -> "_Tree":
        t = cls()
        t.feature = [int(v) for v in st["feature"]]
        t.threshold = [float(v) for v in st["threshold"]]
        t.left = [int(v) for v in st["left"]]
        t.right = [int(v) for v in st["right"]]
        t.label = [int(v) for v in st["label"]]
        t.purity = [float(v) for v in st["purity"]]
        return t


def best_gini_split(X: np.ndarray, y: np.ndarray, rows: np.ndarray,
                    features) -> tuple[int, float, float] | None:
    """Lowest-cost (feature, threshold) over midpoint candidates; None if unsplittable.

    Cost is the size-weighted mean of children's gini impurities. Ties resolve
    to the earliest feature and the lowest threshold, which keeps training
    deterministic.
    """
    y01 = (y[rows] + 1) // 2
    n = len(rows)
    best = None
    for f in features:
        xs = X[rows, f]
        order = np.argsort(xs, kind="stable")
        xs_s = xs[order]
        cum_pos = np.cumsum(y01[order])
        cuts = np.flatnonzero(xs_s[:-1] < xs_s[1:])
        if len(cuts) == 0:
            continue
        n_l = cuts + 1.0
        pos_l = cum_pos[cuts].astype(float)
        p_l = pos_l / n_l
        n_r = n - n_l
        p_r = (cum_pos[-1] - pos_l) / n_r
        cost = (n_l * 2 * p_l * (1 - p_l) + n_r * 2 * p_r * (1 - p_r)) / n
        j = int(np.argmin(cost))
        if best is None or cost[j] < best[0] - 1e-12:
            thr = (xs_s[cuts[j]] + xs_s[cuts[j] + 1]) / 2.0
            best = (float(cost[j]), int(f), float(thr))
    if best is None:
        return None
    return best[1], best[2], best[0]


def _grow(tree: _Tree, X, y, rows, depth, max_depth, mtry, rng) -> int:
    node = tree._new_node()
    n_pos = int(np.sum(y[rows] > 0))
    n = len(rows)
    tree.label[node] = 1 if n_pos * 2 >= n else -1
    tree.purity[node] = max(n_pos, n - n_pos) / n
    if depth >= max_depth or n < 2 or n_pos in (0, n):
        return node
    d = X.shape[1]
    if mtry >= d:
        features = range(d)
    else:
        features = np.sort(rng.choice(d, size=mtry, replace=False))
    split = best_gini_split(X, y, rows, features)
    if split is None:
        return node
    f, thr, _ = split
    go_left = X[rows, f] <= thr
    if not go_left.any() or go_left.all():
        return node
    tree.feature[node] = f
    tree.threshold[node] = thr
    tree.left[node] = _grow(tree, X, y, rows[go_left], depth + 1, max_depth, mtry, rng)
    tree.right[node] = _grow(tree, X, y, rows[~go_left], depth + 1, max_depth, mtry, rng)
    return node


class DTModel(TrainedModel):
    kind = "DT"

    def __init__(self, tree: _Tree, metadata=None):
        super().__init__(metadata)
        self.tree = tree

    @property
    def depth(self) -> int:
        return self.tree.depth()

    def decision_values(self, X):
        leaves = self.tree.apply(np.atleast_2d(X))
        labels = np.array(self.tree.label)[leaves]
        purity = np.array(self.tree.purity)[leaves]
        return labels * purity

    def confidence(self, x):
        leaves = self.tree.apply(np.atleast_2d(np.asarray(x, dtype=float)))
        purity = np.array(self.tree.purity)[leaves]
        c = np.abs(2.0 * purity - 1.0)
        return float(c[0]) if np.asarray(x).ndim == 1 else c

    def state(self):
        return {"tree": self.tree.to_state()}


def train_dt(spec: ModelSpec, data) -> DTModel:
    X, y = extract_xy(data)
    max_depth = int(spec.hyperparameters.get("max_depth", 4))
    tree = _Tree()
    rng = np.random.default_rng(spec.seed)
    _grow(tree, X, y, np.arange(len(X)), 0, max_depth, X.shape[1], rng)
    return DTModel(tree, {"grid": dict(spec.hyperparameters), "seed": spec.seed})


class RFModel(TrainedModel):
    kind = "RF"

    def __init__(self, trees: list[_Tree], metadata=None):
        super().__init__(metadata)
        self.trees = trees

    def decision_values(self, X):
        """Mean of per-tree votes; sign = majority, magnitude = vote margin."""
        X = np.atleast_2d(X)
        votes = np.zeros(len(X))
        for tree in self.trees:
            leaves = tree.apply(X)
            votes += np.array(tree.label)[leaves]
        return votes / len(self.trees)

    def confidence(self, x):
        v = np.abs(self.decision_values(np.atleast_2d(np.asarray(x, dtype=float))))
        return float(v[0]) if np.asarray(x).ndim == 1 else v

    def state(self):
        return {"trees": [t.to_state() for t in self.trees]}


def train_rf(spec: ModelSpec, data) -> RFModel:
    X, y = extract_xy(data)
    hp = spec.hyperparameters
    n_trees = int(hp.get("n_trees", 100))
    max_depth = int(hp.get("max_depth", 4))
    mtry = int(hp.get("mtry", max(1, round(np.sqrt(X.shape[1])))))
    rng = np.random.default_rng(spec.seed)
    trees = []
    n = len(X)
    for _ in range(n_trees):
        tree_rng = np.random.default_rng(rng.integers(2**63))
        rows = tree_rng.integers(0, n, size=n)
        tree = _Tree()
        _grow(tree, X[rows], y[rows], np.arange(n), 0, max_depth, mtry, tree_rng)
        trees.append(tree)
    return RFModel(trees, {"grid": dict(hp), "seed": spec.seed})


register_model_kind("DT", lambda st: DTModel(_Tree.from_state(st["tree"])))
register_model_kind("RF", lambda st: RFModel(
    [_Tree.from_state(t) for t in st["trees"]]))
