import itertools

import numpy as np
import pytest

from drivepref.learners import (MODEL_KINDS, ModelSpec, best_gini_split,
                                binarize, conditional_mutual_information,
                                deserialize, lr_loss_and_grad, nn_loss_and_grad,
                                serialize, train)
from drivepref.errors import ValidationError


def planted_linear(n=200, d=14, seed=0, noise=0.0):
    rng = np.random.default_rng(seed)
    w = rng.normal(size=d)
    X = rng.normal(size=(n, d))
    y = np.where(X @ w >= 0, 1, -1)
    if noise:
        flip = rng.random(n) < noise
        y = np.where(flip, -y, y)
    return X, y, w


def check_gradient(loss_and_grad, theta, args, n_points=20, seed=0):
    """Central finite differences vs analytic, relative error per point."""
    rng = np.random.default_rng(seed)
    errs = []
    for _ in range(n_points):
        point = theta + rng.normal(size=theta.shape)
        _, g = loss_and_grad(point, *args)
        num = np.zeros_like(point)
        h = 1e-5
        for i in range(len(point)):
            up, dn = point.copy(), point.copy()
            up[i] += h
            dn[i] -= h
            num[i] = (loss_and_grad(up, *args)[0] - loss_and_grad(dn, *args)[0]) / (2 * h)
        denom = max(np.linalg.norm(g), np.linalg.norm(num), 1e-12)
        errs.append(np.linalg.norm(g - num) / denom)
    return max(errs)


class TestLR:
    def test_separable_data_fits_perfectly(self):
        X, y, _ = planted_linear(seed=1)
        m = train(ModelSpec("LR", {"l2": 0.0, "iters": 2000, "lr": 0.3}), (X, y))
        assert np.mean(m.predict(X) == y) == 1.0

    def test_zero_input_breaks_to_plus_one(self):
        X, y, _ = planted_linear(seed=2)
        m = train(ModelSpec("LR", {}), (X, y))
        assert m.predict(np.zeros(14)) == 1
        assert m.confidence(np.zeros(14)) == pytest.approx(0.0, abs=1e-12)

    def test_antisymmetry_away_from_boundary(self):
        X, y, _ = planted_linear(seed=3)
        m = train(ModelSpec("LR", {}), (X, y))
        rng = np.random.default_rng(0)
        pts = rng.normal(size=(50, 14))
        z = m.decision_values(pts)
        keep = np.abs(z) > 1e-9
        assert np.all(m.predict(-pts[keep]) == -m.predict(pts[keep]))

    def test_gradient_check(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(40, 14))
        y01 = (rng.random(40) < 0.5).astype(float)
        err = check_gradient(lr_loss_and_grad, np.zeros(14), (X, y01, 0.01))
        assert err <= 1e-4


class TestNN:
    def test_gradient_check(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(30, 14))
        y01 = (rng.random(30) < 0.5).astype(float)
        hidden = 6
        n_params = hidden * 14 + hidden + hidden + 1
        err = check_gradient(nn_loss_and_grad, np.zeros(n_params),
                             (X, y01, 1e-3, hidden), n_points=10)
        assert err <= 1e-4

    def test_learns_nonlinear_boundary(self):
        rng = np.random.default_rng(6)
        X = rng.normal(size=(300, 14))
        y = np.where(np.abs(X[:, 0]) + np.abs(X[:, 1]) > 1.5, 1, -1)
        m = train(ModelSpec("NN", {"hidden": 16, "lr": 0.3, "epochs": 800}), (X, y))
        assert np.mean(m.predict(X) == y) > 0.9


class TestDT:
    def test_root_split_matches_exhaustive_gini_oracle(self):
        rng = np.random.default_rng(7)
        X = rng.normal(size=(120, 14))
        y = np.where(X[:, 5] > 0.3, 1, -1)  # single informative feature
        m = train(ModelSpec("DT", {"max_depth": 1}), (X, y))

        # oracle: exhaustive gini over all features and midpoint thresholds
        def gini_cost(f, thr):
            left = y[X[:, f] <= thr]
            right = y[X[:, f] > thr]
            cost = 0.0
            for part in (left, right):
                if len(part) == 0:
                    return np.inf
                p = np.mean(part > 0)
                cost += len(part) * 2 * p * (1 - p)
            return cost / len(y)
        best = min(
            ((f, (a + b) / 2) for f in range(14)
             for a, b in itertools.pairwise(np.unique(X[:, f]))),
            key=lambda ft: gini_cost(*ft))
        assert m.tree.feature[0] == best[0] == 5
        assert m.tree.threshold[0] == pytest.approx(best[1])

    def test_depth_bound_respected(self):
        X, y, _ = planted_linear(n=300, seed=8)
        for depth in (1, 2, 4, 6):
            m = train(ModelSpec("DT", {"max_depth": depth}), (X, y))
            assert m.depth <= depth

    def test_pure_node_stops(self):
        X = np.ones((10, 14))
        y = np.ones(10, dtype=int)
        m = train(ModelSpec("DT", {"max_depth": 5}), (X, y))
        assert m.depth == 0
        assert m.predict(np.ones(14)) == 1


class TestRF:
    def test_majority_vote_equals_single_tree_when_identical(self):
        # zero-depth trees all predict the majority label
        X, y, _ = planted_linear(n=50, seed=9)
        rf = train(ModelSpec("RF", {"n_trees": 7, "max_depth": 4}), (X, y))
        one = train(ModelSpec("RF", {"n_trees": 1, "max_depth": 4}, seed=3), (X, y))
        pts = np.random.default_rng(1).normal(size=(20, 14))
        votes = rf.decision_values(pts)
        assert np.all(np.abs(votes) <= 1.0)
        assert set(np.unique(one.decision_values(pts))) <= {-1.0, 1.0}

    def test_unanimous_confidence_is_one(self):
        X, y, _ = planted_linear(n=200, seed=10)
        rf = train(ModelSpec("RF", {"n_trees": 20, "max_depth": 8}), (X, y))
        # training points far from the boundary get unanimous votes
        z = np.abs(rf.decision_values(X))
        assert z.max() == pytest.approx(1.0)

    def test_fits_planted_signal(self):
        X, y, _ = planted_linear(n=400, seed=11)
        rf = train(ModelSpec("RF", {"n_trees": 50, "max_depth": 8}), (X, y))
        assert np.mean(rf.predict(X) == y) > 0.95


class TestSVMs:
    def test_lsvm_separable(self):
        X, y, _ = planted_linear(seed=12)
        m = train(ModelSpec("LSVM", {"C": 10.0, "iters": 2000}), (X, y))
        assert np.mean(m.predict(X) == y) >= 0.97

    def test_rbfsvm_nonlinear(self):
        rng = np.random.default_rng(13)
        X = rng.normal(size=(200, 14))
        y = np.where(np.linalg.norm(X[:, :3], axis=1) < 1.4, 1, -1)
        m = train(ModelSpec("RBFSVM", {"C": 10.0, "gamma": 0.3, "iters": 1500,
                                       "lr": 0.1}), (X, y))
        assert np.mean(m.predict(X) == y) > 0.9
        assert m.metadata["method"].startswith("primal-kernel")

    def test_confidence_in_unit_interval(self):
        X, y, _ = planted_linear(seed=14)
        for kind in ("LSVM", "RBFSVM"):
            m = train(ModelSpec(kind, {}), (X, y))
            c = m.confidence(X[:20])
            assert np.all((0 <= c) & (c <= 1))


class TestBN:
    def test_structure_is_a_tree(self):
        rng = np.random.default_rng(15)
        X = rng.normal(size=(300, 14))
        y = np.where(X[:, 0] + X[:, 1] > 0, 1, -1)
        m = train(ModelSpec("BN", {}), (X, y))
        assert len(m.edges) == 13  # n-1 edges
        assert np.sum(m.parent == -1) == 1
        # acyclic by construction: walking parents always reaches the root
        for j in range(14):
            seen = set()
            cur = j
            while cur != -1:
                assert cur not in seen
                seen.add(cur)
                cur = int(m.parent[cur])

    def test_independent_features_near_zero_mi_oracle(self):
        rng = np.random.default_rng(16)
        B = (rng.random((4000, 8)) < 0.5).astype(int)
        y = np.where(rng.random(4000) < 0.5, 1, -1)

        def oracle_mi(i, j):
            # plug-in conditional mutual information, no smoothing
            total = 0.0
            for cls in (1, -1):
                sel = B[y == cls]
                pc = len(sel) / len(B)
                for a in (0, 1):
                    for b in (0, 1):
                        pab = np.mean((sel[:, i] == a) & (sel[:, j] == b))
                        pa = np.mean(sel[:, i] == a)
                        pb = np.mean(sel[:, j] == b)
                        if pab > 0:
                            total += pc * pab * np.log(pab / (pa * pb))
            return total

        mi = conditional_mutual_information(B, y)
        X = np.where(B > 0, 1.0, -1.0)  # binarize() recovers B from signs
        m = train(ModelSpec("BN", {}), (X, y))
        for i, j in m.edges:
            assert oracle_mi(i, j) < 0.01
            assert mi[i, j] < 0.01

    def test_binarize_strictly_greater(self):
        x = np.array([-1.0, 0.0, 0.5])
        assert binarize(x).tolist() == [[0, 0, 1]]

    def test_learns_sign_features(self):
        rng = np.random.default_rng(17)
        X = rng.normal(size=(500, 14))
        y = np.where(X[:, 3] > 0, 1, -1)
        m = train(ModelSpec("BN", {}), (X, y))
        assert np.mean(m.predict(X) == y) > 0.95


class TestCommon:
    @pytest.mark.parametrize("kind", MODEL_KINDS)
    def test_serialize_roundtrip_preserves_predictions(self, kind):
        X, y, _ = planted_linear(n=120, seed=18)
        m = train(ModelSpec(kind, {}, seed=7), (X, y))
        again = deserialize(serialize(m))
        pts = np.random.default_rng(2).normal(size=(40, 14))
        assert np.array_equal(m.predict(pts), again.predict(pts))

    @pytest.mark.parametrize("kind", MODEL_KINDS)
    def test_determinism_same_seed_same_bytes(self, kind):
        X, y, _ = planted_linear(n=80, seed=19)
        a = serialize(train(ModelSpec(kind, {}, seed=5), (X, y)))
        b = serialize(train(ModelSpec(kind, {}, seed=5), (X, y)))
        assert a == b

    def test_empty_data_rejected(self):
        with pytest.raises(ValidationError):
            train(ModelSpec("LR", {}), (np.zeros((0, 14)), np.zeros(0)))

    def test_nonfinite_features_rejected(self):
        X = np.full((4, 14), np.nan)
        with pytest.raises(ValidationError):
            train(ModelSpec("LR", {}), (X, np.array([1, -1, 1, -1])))

    def test_nonfinite_input_rejected_at_predict(self):
        X, y, _ = planted_linear(n=60, seed=20)
        m = train(ModelSpec("LR", {}), (X, y))
        with pytest.raises(ValidationError):
            m.predict(np.full(14, np.inf))

    @pytest.mark.parametrize("kind", MODEL_KINDS)
    def test_confidence_unit_interval_and_predict_sign(self, kind):
        X, y, _ = planted_linear(n=150, seed=21)
        m = train(ModelSpec(kind, {}, seed=1), (X, y))
        pts = np.random.default_rng(3).normal(size=(30, 14))
        c = m.confidence(pts)
        assert np.all((0 <= np.asarray(c)) & (np.asarray(c) <= 1))
        assert set(np.unique(m.predict(pts))) <= {-1, 1}
