"""Tree-augmented one-dependence Bayesian classifier.

Features are binarized as "did the first realization violate this rule more"
(strictly greater than zero difference; ties map to 0). The feature-tree
structure is the maximum spanning tree over class-conditional mutual
information (Chow-Liu), so each feature has at most one feature parent in
addition to the class. Probabilities use Laplace smoothing with alpha = 1.
"""
from __future__ import annotations

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import minimum_spanning_tree

from .base import ModelSpec, TrainedModel, extract_xy, register_model_kind

ALPHA = 1.0


def binarize(X: np.ndarray) -> np.ndarray:
    return (np.atleast_2d(X) > 0).astype(int)


def conditional_mutual_information(B: np.ndarray, y: np.ndarray) -> np.ndarray:
    """I(Xi; Xj | C) matrix from Laplace-smoothed class-conditional joints."""
    n, d = B.shape
    classes = (y < 0, y > 0)
    mi = np.zeros((d, d))
    for cls_mask in classes:
        n_c = int(np.sum(cls_mask))
        p_c = (n_c + ALPHA) / (n + 2 * ALPHA)
        Bc = B[cls_mask]
        ones = Bc.sum(axis=0).astype(float)
        # joint[i, j] = count(xi = 1, xj = 1 | c); other cells derive from margins
        joint11 = Bc.T.astype(float) @ Bc
        for i in range(d):
            for j in range(i + 1, d):
                c11 = joint11[i, j]
                c10 = ones[i] - c11
                c01 = ones[j] - c11
                c00 = n_c - ones[i] - ones[j] + c11
                p = (np.array([[c00, c01], [c10, c11]]) + ALPHA) / (n_c + 4 * ALPHA)
                pi = p.sum(axis=1, keepdims=True)
                pj = p.sum(axis=0, keepdims=True)
                val = float(np.sum(p * np.log(p / (pi * pj))))
                mi[i, j] += p_c * val
                mi[j, i] = mi[i, j]
    return mi


def chow_liu_parents(mi: np.ndarray) -> np.ndarray:
    """Maximum-weight spanning tree, rooted at feature 0; parent[root] = -1."""
    d = mi.shape[0]
    # Shift so every candidate edge has positive weight: MST then always spans.
    w = (mi.max() + 1.0) - mi
    dense = np.triu(w, k=1)
    mst = minimum_spanning_tree(csr_matrix(dense)).toarray()
    adj = [[] for _ in range(d)]
    for i, j in zip(*np.nonzero(mst)):
        adj[int(i)].append(int(j))
        adj[int(j)].append(int(i))
    parent = np.full(d, -1, dtype=int)
    seen = {0}
    queue = [0]
    while queue:
        cur = queue.pop(0)
        for nxt in adj[cur]:
            if nxt not in seen:
                seen.add(nxt)
                parent[nxt] = cur
                queue.append(nxt)
    return parent


class BNModel(TrainedModel):
    kind = "BN"

    def __init__(self, parent: np.ndarray, prior: np.ndarray, cpt: np.ndarray,
                 metadata=None):
        super().__init__(metadata)
        self.parent = np.asarray(parent, dtype=int)
        self.prior = np.asarray(prior, dtype=float)       # P(c), c in (-1, +1)
        self.cpt = np.asarray(cpt, dtype=float)           # [feat, c, parent_val, val]

    @property
    def edges(self) -> list[tuple[int, int]]:
        return [(int(p), int(j)) for j, p in enumerate(self.parent) if p >= 0]

    def decision_values(self, X):
        B = binarize(np.asarray(X, dtype=float))
        n, d = B.shape
        log_post = np.tile(np.log(self.prior), (n, 1))
        for j in range(d):
            p = self.parent[j]
            pv = B[:, p] if p >= 0 else np.zeros(n, dtype=int)
            for c in (0, 1):
                log_post[:, c] += np.log(self.cpt[j, c, pv, B[:, j]])
        return log_post[:, 1] - log_post[:, 0]

    def confidence(self, x):
        z = self.decision_values(np.atleast_2d(np.asarray(x, dtype=float)))
        p = 1.0 / (1.0 + np.exp(-z))
        c = np.abs(2.0 * p - 1.0)
        return float(c[0]) if np.asarray(x).ndim == 1 else c

    def state(self):
        return {"parent": self.parent.tolist(), "prior": self.prior.tolist(),
                "cpt": self.cpt.tolist()}


def train_bn(spec: ModelSpec, data) -> BNModel:
    X, y = extract_xy(data)
    B = binarize(X)
    n, d = B.shape
    mi = conditional_mutual_information(B, y)
    parent = chow_liu_parents(mi)

    prior = np.array([np.sum(y < 0) + ALPHA, np.sum(y > 0) + ALPHA]) / (n + 2 * ALPHA)
    cpt = np.zeros((d, 2, 2, 2))
    for c, cls_mask in enumerate((y < 0, y > 0)):
        Bc = B[cls_mask]
        for j in range(d):
            p = parent[j]
            if p < 0:
                counts = np.array([np.sum(Bc[:, j] == 0), np.sum(Bc[:, j] == 1)],
                                  dtype=float)
                probs = (counts + ALPHA) / (len(Bc) + 2 * ALPHA)
                cpt[j, c, 0, :] = probs
                cpt[j, c, 1, :] = probs
            else:
                for pv in (0, 1):
                    rows = Bc[Bc[:, p] == pv]
                    counts = np.array([np.sum(rows[:, j] == 0), np.sum(rows[:, j] == 1)],
                                      dtype=float)
                    cpt[j, c, pv, :] = (counts + ALPHA) / (len(rows) + 2 * ALPHA)
    meta = {"grid": dict(spec.hyperparameters), "seed": spec.seed,
            "structure": "chow-liu-tan"}
    return BNModel(parent, prior, cpt, meta)


register_model_kind("BN", lambda st: BNModel(
    np.array(st["parent"]), np.array(st["prior"]), np.array(st["cpt"])))
