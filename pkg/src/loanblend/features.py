"""Feature selection: recursive elimination driven by tree importances,
a cross-validated score-vs-k curve, and Pearson correlation analysis."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import learners
from .dataset import stratified_kfold
from .learners import REG_LAMBDA, ClassifierSpec, TrainedModel

# modest fixed estimator settings for the elimination refits
RFE_ESTIMATORS = {
    "gb": {"n_estimators": 50, "max_depth": 3, "learning_rate": 0.1},
    "ert": {"n_estimators": 60, "max_depth": 10, "min_samples_split": 4},
}


@dataclass
class ImportanceVector:
    scores: np.ndarray  # nonnegative, aligned with model feature indices
    method: str  # gain | split_avg | impurity

    def normalized(self) -> np.ndarray:
        total = self.scores.sum()
        if total == 0:
            return np.zeros_like(self.scores)
        return self.scores / total


@dataclass
class SelectionResult:
    selected: list  # k surviving names, most important first
    elimination_order: list  # all names, first eliminated first
    cv_scores: dict = field(default_factory=dict)  # k -> mean score


def _split_stats(model: TrainedModel, kinds):
    if model.spec.kind not in kinds:
        raise ValueError(f"expected a {kinds} model, got {model.spec.kind!r}")
    d = model.metadata["features"]
    per_split = []  # (feature, value) pairs
    for tree in model.state.trees:
        for node in range(tree.feature.size):
            f = int(tree.feature[node])
            if f >= 0:
                per_split.append((f, float(tree.stat_a[node]), float(tree.stat_b[node])))
    return d, per_split


def importance_gain(model: TrainedModel) -> ImportanceVector:
    """Per-feature sum of split gains G^2/(H + lambda), normalised by the
    total gain over all trees."""
    d, splits = _split_stats(model, ("gb",))
    scores = np.zeros(d)
    for f, g, h in splits:
        scores[f] += g * g / (h + REG_LAMBDA)
    total = scores.sum()
    if total == 0:
        warnings.warn("model has no splits; importances are all zero")
        return ImportanceVector(scores=scores, method="gain")
    return ImportanceVector(scores=scores / total, method="gain")


def importance_split_avg(model: TrainedModel) -> ImportanceVector:
    """Average gain per split for each feature; unused features score 0."""
    d, splits = _split_stats(model, ("gb",))
    totals = np.zeros(d)
    counts = np.zeros(d)
    for f, g, h in splits:
        totals[f] += g * g / (h + REG_LAMBDA)
        counts[f] += 1
    scores = np.divide(totals, counts, out=np.zeros(d), where=counts > 0)
    return ImportanceVector(scores=scores, method="split_avg")


def importance_impurity(model: TrainedModel) -> ImportanceVector:
    """Sample-fraction-weighted impurity reduction per feature."""
    d, splits = _split_stats(model, ("ert",))
    scores = np.zeros(d)
    for f, frac, reduction in splits:
        scores[f] += frac * reduction
    if scores.sum() == 0:
        warnings.warn("model has no splits; importances are all zero")
    return ImportanceVector(scores=scores, method="impurity")


def _importance_for(kind: str, model: TrainedModel) -> np.ndarray:
    if kind == "gb":
        return importance_gain(model).scores
    if kind == "ert":
        return importance_impurity(model).scores
    raise ValueError(f"no importance rule for estimator {kind!r}")


def _fit_estimator(kind: str, X, y, seed) -> TrainedModel:
    if kind not in RFE_ESTIMATORS:
        raise ValueError(f"estimator_kind must be one of {sorted(RFE_ESTIMATORS)}")
    spec = ClassifierSpec(kind=kind, hyperparameters=dict(RFE_ESTIMATORS[kind]))
    return learners.fit(spec, X, y, seed=seed)


def rfe(X, y, estimator_kind: str, k_target: int, seed: int = 0,
        feature_names=None) -> SelectionResult:
    """Drop the least-important feature one refit at a time until
    k_target remain. Importance ties break by dropping the
    lexicographically last name."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if k_target < 1:
        raise ValueError("k_target must be >= 1")
    d = X.shape[1]
    if feature_names is None:
        feature_names = [f"f{j}" for j in range(d)]
    if len(feature_names) != d:
        raise ValueError("feature_names length mismatch")
    if k_target > d:
        raise ValueError("k_target exceeds feature count")

    active = list(range(d))
    eliminated = []
    while len(active) > k_target:
        model = _fit_estimator(estimator_kind, X[:, active], y, seed)
        scores = _importance_for(estimator_kind, model)
        low = scores.min()
        tied = [active[i] for i in range(len(active)) if scores[i] == low]
        drop = max(tied, key=lambda j: feature_names[j])
        eliminated.append(drop)
        active.remove(drop)

    model = _fit_estimator(estimator_kind, X[:, active], y, seed)
    scores = _importance_for(estimator_kind, model)
    # survivors ranked most important first; stable tie-break on name
    ranked = sorted(
        range(len(active)),
        key=lambda i: (-scores[i], feature_names[active[i]]),
    )
    selected = [feature_names[active[i]] for i in ranked]
    order = [feature_names[j] for j in eliminated] + list(reversed(selected))
    return SelectionResult(selected=selected, elimination_order=order)


def cv_score_vs_k(X, y, estimator_kind: str, k_range, folds: int, seed: int = 0,
                  feature_names=None) -> dict:
    """Stratified k-fold mean accuracy per feature count.

    Features are ranked once with a full elimination pass; each k keeps
    the k most important names from that ranking.
    """
    if folds < 2:
        raise ValueError("folds must be >= 2")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    d = X.shape[1]
    if feature_names is None:
        feature_names = [f"f{j}" for j in range(d)]
    ranking = rfe(X, y, estimator_kind, 1, seed, feature_names).elimination_order
    index_of = {n: j for j, n in enumerate(feature_names)}
    scores = {}
    for k in sorted(set(int(k) for k in k_range)):
        if not 1 <= k <= d:
            raise ValueError(f"k={k} outside [1, {d}]")
        cols = [index_of[n] for n in ranking[d - k:]]
        accs = []
        for train_idx, test_idx in stratified_kfold(y, folds, seed):
            model = _fit_estimator(estimator_kind, X[np.ix_(train_idx, cols)], y[train_idx], seed)
            pred = learners.predict(model, X[np.ix_(test_idx, cols)])
            accs.append(float(np.mean(pred == y[test_idx])))
        scores[k] = float(np.mean(accs))
    return scores


def pearson_matrix(X) -> np.ndarray:
    """Pairwise Pearson correlations; symmetric with unit diagonal.

    Constant columns get zero correlation with everything (warning) and
    keep the unit diagonal.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("X must be 2-D")
    centred = X - X.mean(axis=0)
    std = X.std(axis=0)
    constant = std == 0
    if constant.any():
        warnings.warn(f"{int(constant.sum())} constant column(s); correlation set to 0")
    safe = np.where(constant, 1.0, std)
    Z = centred / safe
    corr = (Z.T @ Z) / X.shape[0]
    corr[constant, :] = 0.0
    corr[:, constant] = 0.0
    corr = np.clip((corr + corr.T) / 2.0, -1.0, 1.0)
    np.fill_diagonal(corr, 1.0)
    return corr


def aggregate_rankings(orders) -> list:
    """Rank-sum aggregate of several elimination orders.

    Later positions mean more important; the result lists names most
    important first, ties broken lexicographically.
    """
    if not orders:
        raise ValueError("no rankings to aggregate")
    names = list(orders[0])
    for order in orders:
        if sorted(order) != sorted(names):
            raise ValueError("rankings cover different feature sets")
    score = {n: 0 for n in names}
    for order in orders:
        for pos, name in enumerate(order):
            score[name] += pos
    return sorted(names, key=lambda n: (-score[n], n))
