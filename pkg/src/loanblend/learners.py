"""Base-model pool behind one probabilistic-classifier interface.

Six learner kinds (lr, knn, ert, gb, mlp, svm), each tunable over its
declared hyperparameter space. Tree models record per-split statistics
so feature importances can be computed from the fitted structure;
logistic regression and the MLP expose analytic loss gradients.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .dataset import stratified_holdout

REG_LAMBDA = 1.0  # second-order leaf regulariser for gradient boosting

SEARCH_SPACES = {
    "gb": [
        ("n_estimators", "integer", 50, 200),
        ("max_depth", "integer", 3, 10),
        ("learning_rate", "real", 0.01, 0.1),
    ],
    "mlp": [
        ("hidden_layer_sizes", "integer", 50, 200),
        ("alpha", "real", 0.0001, 0.01),
    ],
    "svm": [
        ("C", "real", 0.1, 10.0),
        ("gamma", "real", 0.001, 0.1),
    ],
    "knn": [
        ("n_neighbors", "integer", 3, 20),
    ],
    "lr": [
        ("C", "real", 0.1, 10.0),
    ],
    "ert": [
        ("n_estimators", "integer", 50, 200),
        ("max_depth", "integer", 10, 20),
        ("min_samples_split", "integer", 2, 10),
    ],
}

DEFAULT_SPECS = {
    "gb": {"n_estimators": 150, "max_depth": 5, "learning_rate": 0.05},
    "mlp": {"hidden_layer_sizes": 150, "alpha": 0.005},
    "svm": {"C": 3.0, "gamma": 0.05},
    "knn": {"n_neighbors": 10},
    "lr": {"C": 1.5},
    "ert": {"n_estimators": 120, "max_depth": 15, "min_samples_split": 4},
}

MODEL_KINDS = tuple(SEARCH_SPACES)

_FORMAT_VERSION = 1


@dataclass
class ClassifierSpec:
    kind: str
    hyperparameters: dict

    def validate(self):
        if self.kind not in SEARCH_SPACES:
            raise ValueError(f"unknown model kind {self.kind!r}")
        space = {name: (knd, lo, hi) for name, knd, lo, hi in SEARCH_SPACES[self.kind]}
        if set(self.hyperparameters) != set(space):
            raise ValueError(
                f"{self.kind}: expected hyperparameters {sorted(space)}, "
                f"got {sorted(self.hyperparameters)}"
            )
        for name, value in self.hyperparameters.items():
            knd, lo, hi = space[name]
            if not lo <= value <= hi:
                raise ValueError(f"{self.kind}.{name}={value} outside [{lo}, {hi}]")
            if knd == "integer" and int(value) != value:
                raise ValueError(f"{self.kind}.{name} must be an integer")


def default_spec(kind: str) -> ClassifierSpec:
    return ClassifierSpec(kind=kind, hyperparameters=dict(DEFAULT_SPECS[kind]))


@dataclass
class TrainedModel:
    spec: ClassifierSpec
    state: object
    metadata: dict  # seed, rows, features
    loss_trace: np.ndarray | None = None


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.clip(z, -35.0, 35.0)))


class _Scaler:
    """Column standardiser with a unit floor on constant columns."""

    def __init__(self, mean, std):
        self.mean = mean
        self.std = std

    @classmethod
    def fit(cls, X):
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        return cls(mean, np.where(std > 0, std, 1.0))

    def transform(self, X):
        return (X - self.mean) / self.std


def _descend(theta0, loss_grad, max_iter=500, tol=1e-10):
    """Full-batch gradient descent with backtracking line search.

    Guarantees a nonincreasing loss trace and is fully deterministic.
    """
    theta = theta0
    loss, grad = loss_grad(theta)
    trace = [loss]
    step = 1.0
    for _ in range(max_iter):
        gnorm = np.linalg.norm(grad)
        if gnorm < 1e-9:
            break
        accepted = False
        while step > 1e-14:
            cand = theta - step * grad
            new_loss, new_grad = loss_grad(cand)
            if new_loss <= loss - 1e-15:
                theta, loss, grad = cand, new_loss, new_grad
                trace.append(loss)
                step *= 1.25
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        if len(trace) > 2 and trace[-2] - trace[-1] < tol:
            break
    return theta, np.asarray(trace)


# ---------------------------------------------------------------------------
# logistic regression


def lr_loss_grad(theta, X, y, l2):
    """Mean binary cross-entropy + 0.5*l2*||w||^2; theta = [w..., b]."""
    w, b = theta[:-1], theta[-1]
    z = X @ w + b
    p = _sigmoid(z)
    eps = 1e-12
    loss = float(-np.mean(y * np.log(p + eps) + (1 - y) * np.log(1 - p + eps)))
    loss += 0.5 * l2 * float(w @ w)
    resid = (p - y) / y.size
    grad = np.concatenate([X.T @ resid + l2 * w, [resid.sum()]])
    return loss, grad


class _LogisticModel:
    def __init__(self, scaler, w, b):
        self.scaler = scaler
        self.w = w
        self.b = b

    @classmethod
    def train(cls, X, y, C):
        scaler = _Scaler.fit(X)
        Xs = scaler.transform(X)
        l2 = 1.0 / (C * X.shape[0])
        theta0 = np.zeros(X.shape[1] + 1)
        theta, trace = _descend(theta0, lambda t: lr_loss_grad(t, Xs, y, l2))
        return cls(scaler, theta[:-1], theta[-1]), trace

    def predict_proba(self, X):
        return _sigmoid(self.scaler.transform(X) @ self.w + self.b)

    def to_arrays(self):
        return {
            "scaler_mean": self.scaler.mean, "scaler_std": self.scaler.std,
            "w": self.w, "b": np.asarray([self.b]),
        }

    @classmethod
    def from_arrays(cls, a):
        return cls(_Scaler(a["scaler_mean"], a["scaler_std"]), a["w"], float(a["b"][0]))


# ---------------------------------------------------------------------------
# linear SVM with a logistic link on the margin


def _svm_objective(theta, X, ysigned, l2):
    w, b = theta[:-1], theta[-1]
    margins = ysigned * (X @ w + b)
    hinge = np.maximum(0.0, 1.0 - margins)
    loss = float(hinge.mean()) + 0.5 * l2 * float(w @ w)
    active = hinge > 0
    coeff = np.where(active, -ysigned, 0.0) / ysigned.size
    grad = np.concatenate([X.T @ coeff + l2 * w, [coeff.sum()]])
    return loss, grad


class _LinearSvmModel:
    def __init__(self, scaler, w, b, platt_a, platt_b):
        self.scaler = scaler
        self.w = w
        self.b = b
        self.platt_a = platt_a
        self.platt_b = platt_b

    @classmethod
    def train(cls, X, y, C, seed):
        scaler = _Scaler.fit(X)
        Xs = scaler.transform(X)
        fit_idx, cal_idx = stratified_holdout(y, 0.2, [seed, 11])
        ysigned = 2.0 * y - 1.0
        l2 = 1.0 / (C * fit_idx.size)
        theta0 = np.zeros(X.shape[1] + 1)
        theta, _ = _descend(
            theta0, lambda t: _svm_objective(t, Xs[fit_idx], ysigned[fit_idx], l2)
        )
        w, b = theta[:-1], theta[-1]
        y_cal = y[cal_idx]
        if np.unique(y_cal).size < 2:
            warnings.warn("single-class calibration fold; calibrating on training part")
            cal_idx = fit_idx
            y_cal = y[cal_idx]
        margins = (Xs[cal_idx] @ w + b)[:, None]
        ptheta, _ = _descend(
            np.zeros(2), lambda t: lr_loss_grad(t, margins, y_cal, 0.0)
        )
        return cls(scaler, w, b, float(ptheta[0]), float(ptheta[1]))

    def margin(self, X):
        return self.scaler.transform(X) @ self.w + self.b

    def predict_proba(self, X):
        return _sigmoid(self.platt_a * self.margin(X) + self.platt_b)

    def to_arrays(self):
        return {
            "scaler_mean": self.scaler.mean, "scaler_std": self.scaler.std,
            "w": self.w, "b": np.asarray([self.b]),
            "platt": np.asarray([self.platt_a, self.platt_b]),
        }

    @classmethod
    def from_arrays(cls, a):
        return cls(
            _Scaler(a["scaler_mean"], a["scaler_std"]), a["w"], float(a["b"][0]),
            float(a["platt"][0]), float(a["platt"][1]),
        )


# ---------------------------------------------------------------------------
# k-nearest neighbours


class _KnnModel:
    def __init__(self, scaler, X, y, k):
        self.scaler = scaler
        self.X = X
        self.y = y
        self.k = k

    @classmethod
    def train(cls, X, y, n_neighbors):
        scaler = _Scaler.fit(X)
        return cls(scaler, scaler.transform(X), y.astype(np.float64), int(n_neighbors))

    def predict_proba(self, X):
        Xq = self.scaler.transform(X)
        k = min(self.k, self.X.shape[0])
        out = np.empty(Xq.shape[0])
        train_sq = np.sum(self.X**2, axis=1)
        for start in range(0, Xq.shape[0], 512):
            block = Xq[start:start + 512]
            d2 = train_sq - 2.0 * block @ self.X.T + np.sum(block**2, axis=1)[:, None]
            kth = np.partition(d2, k - 1, axis=1)[:, k - 1]
            # distance ties at the k-th rank vote too, so the fraction is
            # independent of train-row order
            neighbours = d2 <= kth[:, None]
            out[start:start + block.shape[0]] = (
                neighbours @ self.y
            ) / neighbours.sum(axis=1)
        return out

    def to_arrays(self):
        return {
            "scaler_mean": self.scaler.mean, "scaler_std": self.scaler.std,
            "X": self.X, "y": self.y, "k": np.asarray([self.k]),
        }

    @classmethod
    def from_arrays(cls, a):
        return cls(_Scaler(a["scaler_mean"], a["scaler_std"]), a["X"], a["y"], int(a["k"][0]))


# ---------------------------------------------------------------------------
# decision trees (shared array layout)


class _Tree:
    """Struct-of-arrays binary tree.

    feature < 0 marks a leaf. Split nodes carry the statistics needed by
    the importance formulas: stat_a/stat_b are (G, H) for boosting trees
    and (node fraction, impurity reduction) for extra trees.
    """

    def __init__(self):
        self.feature = []
        self.threshold = []
        self.left = []
        self.right = []
        self.value = []
        self.stat_a = []
        self.stat_b = []

    def add_leaf(self, value):
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(value)
        self.stat_a.append(0.0)
        self.stat_b.append(0.0)
        return len(self.feature) - 1

    def add_split(self, feature, threshold, stat_a, stat_b):
        self.feature.append(feature)
        self.threshold.append(threshold)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        self.stat_a.append(stat_a)
        self.stat_b.append(stat_b)
        return len(self.feature) - 1

    def finalize(self):
        self.feature = np.asarray(self.feature, dtype=np.int64)
        self.threshold = np.asarray(self.threshold)
        self.left = np.asarray(self.left, dtype=np.int64)
        self.right = np.asarray(self.right, dtype=np.int64)
        self.value = np.asarray(self.value)
        self.stat_a = np.asarray(self.stat_a)
        self.stat_b = np.asarray(self.stat_b)
        return self

    def predict(self, X):
        node = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            feat = self.feature[node]
            active = feat >= 0
            if not active.any():
                break
            rows = np.flatnonzero(active)
            nd = node[rows]
            go_left = X[rows, self.feature[nd]] <= self.threshold[nd]
            node[rows] = np.where(go_left, self.left[nd], self.right[nd])
        return self.value[node]


MAX_BINS = 64


def _bin_features(X, max_bins=MAX_BINS):
    """Per-feature cut candidates and integer bin codes.

    Few distinct values keep exact midpoints; larger columns fall back
    to quantile edges. Bin code b <= c exactly when x <= edges[c].
    """
    n, d = X.shape
    edges = []
    codes = np.empty((n, d), dtype=np.int64)
    for j in range(d):
        uniq = np.unique(X[:, j])
        if uniq.size <= max_bins:
            e = (uniq[:-1] + uniq[1:]) / 2.0
        else:
            qs = np.quantile(X[:, j], np.linspace(0, 1, max_bins + 1)[1:-1])
            e = np.unique(qs)
        edges.append(e)
        codes[:, j] = np.searchsorted(e, X[:, j], side="left")
    return edges, codes


def _attach(tree, entry_parent, entry_side, node):
    if entry_parent >= 0:
        if entry_side == 0:
            tree.left[entry_parent] = node
        else:
            tree.right[entry_parent] = node


def _build_boost_tree(codes, edges, g, h, max_depth, reg_lambda):
    """Level-wise second-order tree growth over pre-binned features."""
    tree = _Tree()
    frontier = [(np.arange(codes.shape[0]), -1, 0)]  # rows, parent, side
    for depth in range(max_depth + 1):
        if not frontier:
            break
        splittable = []
        for rows, parent, side in frontier:
            if depth >= max_depth or rows.size < 2:
                G, H = g[rows].sum(), h[rows].sum()
                _attach(tree, parent, side, tree.add_leaf(-G / (H + reg_lambda)))
            else:
                splittable.append((rows, parent, side))
        if not splittable:
            break

        sizes = np.asarray([e[0].size for e in splittable])
        starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
        rows_all = np.concatenate([e[0] for e in splittable])
        slot_of = np.repeat(np.arange(len(splittable)), sizes)
        g_all, h_all = g[rows_all], h[rows_all]
        G_node = np.add.reduceat(g_all, starts)
        H_node = np.add.reduceat(h_all, starts)
        parent_score = G_node**2 / (H_node + reg_lambda)

        n_slots = len(splittable)
        best_gain = np.full(n_slots, 1e-12)
        best_feat = np.full(n_slots, -1, dtype=np.int64)
        best_cut = np.zeros(n_slots, dtype=np.int64)
        for j in range(codes.shape[1]):
            n_edges = edges[j].size
            if n_edges == 0:
                continue
            width = n_edges + 1
            key = slot_of * width + codes[rows_all, j]
            gb = np.bincount(key, weights=g_all, minlength=n_slots * width)
            hb = np.bincount(key, weights=h_all, minlength=n_slots * width)
            nb = np.bincount(key, minlength=n_slots * width)
            gl = np.cumsum(gb.reshape(n_slots, width), axis=1)[:, :n_edges]
            hl = np.cumsum(hb.reshape(n_slots, width), axis=1)[:, :n_edges]
            nl = np.cumsum(nb.reshape(n_slots, width), axis=1)[:, :n_edges]
            gr = G_node[:, None] - gl
            hr = H_node[:, None] - hl
            gain = (
                gl**2 / (hl + reg_lambda) + gr**2 / (hr + reg_lambda)
                - parent_score[:, None]
            )
            gain[(nl == 0) | (nl == sizes[:, None])] = -np.inf
            cut = np.argmax(gain, axis=1)
            gj = gain[np.arange(n_slots), cut]
            better = gj > best_gain
            best_gain[better] = gj[better]
            best_feat[better] = j
            best_cut[better] = cut[better]

        next_frontier = []
        for s, (rows, parent, side) in enumerate(splittable):
            if best_feat[s] < 0:
                _attach(tree, parent, side,
                        tree.add_leaf(-G_node[s] / (H_node[s] + reg_lambda)))
                continue
            j = int(best_feat[s])
            thr = float(edges[j][best_cut[s]])
            node = tree.add_split(j, thr, float(G_node[s]), float(H_node[s]))
            _attach(tree, parent, side, node)
            mask = codes[rows, j] <= best_cut[s]
            next_frontier.append((rows[mask], node, 0))
            next_frontier.append((rows[~mask], node, 1))
        frontier = next_frontier
    return tree.finalize()


class _GradientBoostingModel:
    def __init__(self, f0, learning_rate, trees):
        self.f0 = f0
        self.learning_rate = learning_rate
        self.trees = trees

    @classmethod
    def train(cls, X, y, n_estimators, max_depth, learning_rate):
        p0 = float(np.clip(y.mean(), 1e-6, 1 - 1e-6))
        f0 = math.log(p0 / (1 - p0))
        edges, codes = _bin_features(X)
        F = np.full(y.size, f0)
        trees = []
        trace = []
        for _ in range(int(n_estimators)):
            p = _sigmoid(F)
            g = p - y
            h = np.maximum(p * (1 - p), 1e-12)
            tree = _build_boost_tree(codes, edges, g, h, int(max_depth), REG_LAMBDA)
            F = F + learning_rate * tree.predict(X)
            trees.append(tree)
            p = np.clip(_sigmoid(F), 1e-12, 1 - 1e-12)
            trace.append(float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p))))
        return cls(f0, learning_rate, trees), np.asarray(trace)

    def decision_function(self, X):
        F = np.full(X.shape[0], self.f0)
        for tree in self.trees:
            F += self.learning_rate * tree.predict(X)
        return F

    def predict_proba(self, X):
        return _sigmoid(self.decision_function(X))

    def to_arrays(self):
        return _pack_forest(self.trees) | {
            "f0": np.asarray([self.f0]),
            "learning_rate": np.asarray([self.learning_rate]),
        }

    @classmethod
    def from_arrays(cls, a):
        return cls(float(a["f0"][0]), float(a["learning_rate"][0]), _unpack_forest(a))


def _build_extra_tree(X, y, max_depth, min_samples_split, max_features, rng):
    """Level-wise extremely randomised tree: per frontier node, a random
    feature subset with one uniform random threshold each; the candidate
    with the largest Gini reduction wins."""
    n_total, d = X.shape
    k = min(max_features, d)
    tree = _Tree()
    frontier = [(np.arange(n_total), -1, 0)]  # rows, parent, side
    for depth in range(max_depth + 1):
        if not frontier:
            break
        splittable = []
        for rows, parent, side in frontier:
            y_node = y[rows]
            mean = y_node.mean()
            if depth >= max_depth or rows.size < min_samples_split or mean in (0.0, 1.0):
                _attach(tree, parent, side, tree.add_leaf(float(mean)))
            else:
                splittable.append((rows, parent, side))
        if not splittable:
            break

        sizes = np.asarray([e[0].size for e in splittable])
        starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
        rows_all = np.concatenate([e[0] for e in splittable])
        slot_of = np.repeat(np.arange(len(splittable)), sizes)
        n_slots = len(splittable)

        feats = np.argsort(rng.random((n_slots, d)), axis=1)[:, :k]
        Xg = X[rows_all[:, None], feats[slot_of]]  # per-row gathered candidates
        lo = np.minimum.reduceat(Xg, starts, axis=0)
        hi = np.maximum.reduceat(Xg, starts, axis=0)
        thr = lo + rng.random((n_slots, k)) * (hi - lo)
        left = Xg <= thr[slot_of]
        yb = y[rows_all]
        n_l = np.add.reduceat(left, starts, axis=0).astype(np.float64)
        sum_l = np.add.reduceat(left * yb[:, None], starts, axis=0)
        n_node = sizes[:, None].astype(np.float64)
        y_tot = np.add.reduceat(yb, starts)[:, None]
        valid = (lo < hi) & (n_l > 0) & (n_l < n_node)
        with np.errstate(invalid="ignore", divide="ignore"):
            p_l = np.where(n_l > 0, sum_l / n_l, 0.0)
            n_r = n_node - n_l
            p_r = np.where(n_r > 0, (y_tot - sum_l) / n_r, 0.0)
            child = (n_l * 2 * p_l * (1 - p_l) + n_r * 2 * p_r * (1 - p_r)) / n_node
        p_node = y_tot[:, 0] / n_node[:, 0]
        reduction = (2 * p_node * (1 - p_node))[:, None] - child
        reduction[~valid] = -1.0
        best_k = np.argmax(reduction, axis=1)
        best_red = reduction[np.arange(n_slots), best_k]

        next_frontier = []
        for s, (rows, parent, side) in enumerate(splittable):
            if best_red[s] <= 0.0:
                _attach(tree, parent, side, tree.add_leaf(float(y[rows].mean())))
                continue
            j = int(feats[s, best_k[s]])
            t = float(thr[s, best_k[s]])
            node = tree.add_split(j, t, rows.size / n_total, float(best_red[s]))
            _attach(tree, parent, side, node)
            mask = X[rows, j] <= t
            next_frontier.append((rows[mask], node, 0))
            next_frontier.append((rows[~mask], node, 1))
        frontier = next_frontier
    return tree.finalize()


class _ExtraTreesModel:
    def __init__(self, trees):
        self.trees = trees

    @classmethod
    def train(cls, X, y, n_estimators, max_depth, min_samples_split, seed):
        max_features = max(1, int(round(math.sqrt(X.shape[1]))))
        trees = []
        for t in range(int(n_estimators)):
            rng = np.random.default_rng([seed, 17, t])
            trees.append(
                _build_extra_tree(
                    X, y.astype(np.float64), int(max_depth),
                    int(min_samples_split), max_features, rng,
                )
            )
        return cls(trees)

    def tree_proba(self, t, X):
        return self.trees[t].predict(X)

    def predict_proba(self, X):
        acc = np.zeros(X.shape[0])
        for tree in self.trees:
            acc += tree.predict(X)
        return acc / len(self.trees)

    def to_arrays(self):
        return _pack_forest(self.trees)

    @classmethod
    def from_arrays(cls, a):
        return cls(_unpack_forest(a))


def _pack_forest(trees):
    fields = ("feature", "threshold", "left", "right", "value", "stat_a", "stat_b")
    packed = {f"tree_{name}": np.concatenate([getattr(t, name) for t in trees])
              for name in fields}
    sizes = np.asarray([t.feature.size for t in trees], dtype=np.int64)
    packed["tree_sizes"] = sizes
    return packed


def _unpack_forest(a):
    sizes = a["tree_sizes"]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    trees = []
    for i in range(sizes.size):
        lo, hi = offsets[i], offsets[i + 1]
        t = _Tree()
        t.feature = a["tree_feature"][lo:hi]
        t.threshold = a["tree_threshold"][lo:hi]
        t.left = a["tree_left"][lo:hi]
        t.right = a["tree_right"][lo:hi]
        t.value = a["tree_value"][lo:hi]
        t.stat_a = a["tree_stat_a"][lo:hi]
        t.stat_b = a["tree_stat_b"][lo:hi]
        trees.append(t)
    return trees


# ---------------------------------------------------------------------------
# single hidden layer perceptron


def mlp_unpack(theta, d, hidden):
    i = 0
    W1 = theta[i:i + d * hidden].reshape(d, hidden); i += d * hidden
    b1 = theta[i:i + hidden]; i += hidden
    W2 = theta[i:i + hidden]; i += hidden
    b2 = theta[i]
    return W1, b1, W2, b2


def mlp_loss_grad(theta, X, y, alpha, hidden):
    """Mean BCE + 0.5*alpha*(||W1||^2 + ||W2||^2)/N for a d-hidden-1 net."""
    n, d = X.shape
    W1, b1, W2, b2 = mlp_unpack(theta, d, hidden)
    z1 = X @ W1 + b1
    a1 = np.maximum(z1, 0.0)
    z2 = a1 @ W2 + b2
    p = _sigmoid(z2)
    eps = 1e-12
    loss = float(-np.mean(y * np.log(p + eps) + (1 - y) * np.log(1 - p + eps)))
    loss += 0.5 * alpha * (float(np.sum(W1**2)) + float(W2 @ W2)) / n

    dz2 = (p - y) / n
    gW2 = a1.T @ dz2 + alpha * W2 / n
    gb2 = dz2.sum()
    da1 = np.outer(dz2, W2)
    dz1 = da1 * (z1 > 0)
    gW1 = X.T @ dz1 + alpha * W1 / n
    gb1 = dz1.sum(axis=0)
    grad = np.concatenate([gW1.ravel(), gb1, gW2, [gb2]])
    return loss, grad


class _MlpModel:
    def __init__(self, scaler, theta, hidden):
        self.scaler = scaler
        self.theta = theta
        self.hidden = hidden

    @classmethod
    def train(cls, X, y, hidden, alpha, seed, epochs=150, batch_size=128, lr=0.05):
        scaler = _Scaler.fit(X)
        Xs = scaler.transform(X)
        n, d = Xs.shape
        hidden = int(hidden)
        rng = np.random.default_rng([seed, 23])
        theta = np.concatenate([
            rng.standard_normal(d * hidden) * math.sqrt(2.0 / d),
            np.zeros(hidden),
            rng.standard_normal(hidden) * math.sqrt(2.0 / hidden),
            [0.0],
        ])
        full = lambda t: mlp_loss_grad(t, Xs, y, alpha, hidden)[0]
        prev = full(theta)
        trace = [prev]
        for _ in range(epochs):
            snapshot = theta.copy()
            order = rng.permutation(n)
            for start in range(0, n, batch_size):
                rows = order[start:start + batch_size]
                _, grad = mlp_loss_grad(theta, Xs[rows], y[rows], alpha, hidden)
                theta = theta - lr * grad
            loss = full(theta)
            if loss > prev:
                # reject the epoch so the recorded loss never increases
                theta = snapshot
                lr *= 0.5
                trace.append(prev)
                if lr < 1e-6:
                    break
            else:
                trace.append(loss)
                prev = loss
        return cls(scaler, theta, hidden), np.asarray(trace)

    def predict_proba(self, X):
        Xs = self.scaler.transform(X)
        W1, b1, W2, b2 = mlp_unpack(self.theta, Xs.shape[1], self.hidden)
        a1 = np.maximum(Xs @ W1 + b1, 0.0)
        return _sigmoid(a1 @ W2 + b2)

    def to_arrays(self):
        return {
            "scaler_mean": self.scaler.mean, "scaler_std": self.scaler.std,
            "theta": self.theta, "hidden": np.asarray([self.hidden]),
        }

    @classmethod
    def from_arrays(cls, a):
        return cls(_Scaler(a["scaler_mean"], a["scaler_std"]), a["theta"], int(a["hidden"][0]))


# ---------------------------------------------------------------------------
# public interface

_STATE_CLASSES = {
    "lr": _LogisticModel,
    "svm": _LinearSvmModel,
    "knn": _KnnModel,
    "gb": _GradientBoostingModel,
    "ert": _ExtraTreesModel,
    "mlp": _MlpModel,
}


def fit(spec: ClassifierSpec, X, y, seed: int = 0) -> TrainedModel:
    """Train one base learner. Deterministic for a fixed seed."""
    spec.validate()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ValueError("X must be 2-D with one row per label")
    if not np.isfinite(X).all():
        raise ValueError("X contains non-finite values")
    if np.unique(y).size < 2:
        raise ValueError("training data must contain both classes")
    hp = spec.hyperparameters
    trace = None
    if spec.kind == "lr":
        state, trace = _LogisticModel.train(X, y, hp["C"])
    elif spec.kind == "svm":
        # gamma is part of the declared space but unused by the linear
        # margin model; kernels are out of scope
        state = _LinearSvmModel.train(X, y, hp["C"], seed)
    elif spec.kind == "knn":
        state = _KnnModel.train(X, y, hp["n_neighbors"])
    elif spec.kind == "gb":
        state, trace = _GradientBoostingModel.train(
            X, y, hp["n_estimators"], hp["max_depth"], hp["learning_rate"]
        )
    elif spec.kind == "ert":
        state = _ExtraTreesModel.train(
            X, y, hp["n_estimators"], hp["max_depth"], hp["min_samples_split"], seed
        )
    elif spec.kind == "mlp":
        state, trace = _MlpModel.train(X, y, hp["hidden_layer_sizes"], hp["alpha"], seed)
    else:  # pragma: no cover
        raise AssertionError(spec.kind)
    meta = {"seed": int(seed), "rows": int(X.shape[0]), "features": int(X.shape[1])}
    return TrainedModel(spec=spec, state=state, metadata=meta, loss_trace=trace)


def predict_proba(model: TrainedModel, X) -> np.ndarray:
    """Probability of class 1 per row."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.metadata["features"]:
        raise ValueError(
            f"expected {model.metadata['features']} features, got {X.shape[1] if X.ndim == 2 else 'non-2D'}"
        )
    return np.clip(model.state.predict_proba(X), 0.0, 1.0)


def predict(model: TrainedModel, X, threshold: float = 0.5) -> np.ndarray:
    """Hard labels: 1 iff the class-1 probability is >= threshold."""
    return (predict_proba(model, X) >= threshold).astype(np.int64)


def save_model(path, model: TrainedModel):
    """Versioned binary artifact; round-trips prediction-identical."""
    arrays = model.state.to_arrays()
    header = {
        "format_version": _FORMAT_VERSION,
        "kind": model.spec.kind,
        "hyperparameters": model.spec.hyperparameters,
        "metadata": model.metadata,
    }
    payload = {f"arr_{k}": np.asarray(v) for k, v in arrays.items()}
    payload["header"] = np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8)
    if model.loss_trace is not None:
        payload["loss_trace"] = model.loss_trace
    np.savez(path, **payload)


def load_model(path) -> TrainedModel:
    with np.load(path, allow_pickle=False) as data:
        header = json.loads(bytes(data["header"]).decode())
        if header["format_version"] != _FORMAT_VERSION:
            raise ValueError(f"unsupported model format {header['format_version']}")
        arrays = {k[4:]: data[k] for k in data.files if k.startswith("arr_")}
        trace = data["loss_trace"] if "loss_trace" in data.files else None
    spec = ClassifierSpec(kind=header["kind"], hyperparameters=header["hyperparameters"])
    state = _STATE_CLASSES[spec.kind].from_arrays(arrays)
    return TrainedModel(spec=spec, state=state, metadata=header["metadata"], loss_trace=trace)
