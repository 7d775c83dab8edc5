"""Regularised greedy convex weighting over base-model probabilities,
softmax weighting, weighted/plain averaging, majority voting, the
boosting-style sample-weight update, and meta-feature assembly for
stacking."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import stratified_kfold


@dataclass
class PredictionBundle:
    """Per-model probability vectors on a shared validation set."""

    probabilities: np.ndarray  # n_models x m
    labels: np.ndarray  # length m, values in {0, 1}
    model_names: list

    def __post_init__(self):
        self.probabilities = np.asarray(self.probabilities, dtype=np.float64)
        self.labels = np.asarray(self.labels)
        if self.probabilities.ndim != 2:
            raise ValueError("probabilities must be n_models x m")
        n, m = self.probabilities.shape
        if n < 1 or m < 1:
            raise ValueError("bundle must contain at least one model and one sample")
        if self.labels.shape != (m,):
            raise ValueError("labels length mismatch")
        if not np.isfinite(self.probabilities).all():
            raise ValueError("probabilities must be finite")
        if self.probabilities.min() < 0 or self.probabilities.max() > 1:
            raise ValueError("probabilities must lie in [0, 1]")
        if len(self.model_names) != n:
            raise ValueError("model_names length mismatch")

    @property
    def n_models(self) -> int:
        return self.probabilities.shape[0]


@dataclass
class WeightVector:
    w: np.ndarray
    provenance: str  # greedy | softmax | uniform

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=np.float64)
        if np.any(self.w < 0):
            raise ValueError("weights must be nonnegative")
        if abs(self.w.sum() - 1.0) > 1e-9:
            raise ValueError("weights must sum to 1")


def uniform_weights(n: int) -> WeightVector:
    return WeightVector(w=np.full(n, 1.0 / n), provenance="uniform")


@dataclass
class GreedyConfig:
    lam: float = 1e-3  # quadratic weight penalty
    delta: float = 0.05  # weight increment per tentative move
    max_passes: int = 200
    tolerance: float = 1e-6
    min_delta: float = 1e-4  # annealing floor once a sweep stalls

    def validate(self):
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if not 0.0 < self.delta <= 1.0:
            raise ValueError("delta must lie in (0, 1]")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be > 0")


def _weights_array(w) -> np.ndarray:
    if isinstance(w, WeightVector):
        return w.w
    return np.asarray(w, dtype=np.float64)


def regularised_loss(bundle: PredictionBundle, w, lam: float) -> float:
    """Mean squared error of the convex combination (the Brier loss of
    the blended probabilities) plus lam * sum(w_i^2)."""
    wv = _weights_array(w)
    blended = wv @ bundle.probabilities
    mse = float(np.mean((blended - bundle.labels) ** 2))
    return mse + lam * float(wv @ wv)


def greedy_weights(bundle: PredictionBundle, config: GreedyConfig | None = None) -> WeightVector:
    """Coordinate-ascent search over the probability simplex.

    Starting from equal weights, each sweep tentatively adds delta to
    one model's weight, renormalises, and keeps the move only if the
    regularised loss strictly decreases. Sweeps repeat until a full
    pass improves by less than the tolerance; the increment is then
    halved (down to min_delta) so the final weights sit arbitrarily
    close to the constrained optimum.
    """
    if config is None:
        config = GreedyConfig()
    config.validate()
    n = bundle.n_models
    w = np.full(n, 1.0 / n)
    loss = regularised_loss(bundle, w, config.lam)
    delta = config.delta
    for _ in range(config.max_passes):
        improved = 0.0
        for i in range(n):
            trial = w.copy()
            trial[i] += delta
            trial /= trial.sum()
            trial_loss = regularised_loss(bundle, trial, config.lam)
            if trial_loss < loss:
                improved += loss - trial_loss
                w, loss = trial, trial_loss
        if improved < config.tolerance:
            delta *= 0.5
            if delta < config.min_delta:
                break
    w = np.maximum(w, 0.0)
    w /= w.sum()
    return WeightVector(w=w, provenance="greedy")


def softmax_weights(scores) -> WeightVector:
    """Convex weights from performance scores via a max-shifted softmax."""
    s = np.asarray(scores, dtype=np.float64)
    if not np.isfinite(s).all():
        raise ValueError("scores must be finite")
    z = np.exp(s - s.max())
    return WeightVector(w=z / z.sum(), provenance="softmax")


def weighted_average(probabilities, w) -> np.ndarray:
    """Convex combination of per-model probability vectors."""
    P = np.asarray(probabilities, dtype=np.float64)
    wv = _weights_array(w)
    if P.ndim != 2 or P.shape[0] != wv.size:
        raise ValueError("probabilities must be n_models x m matching the weights")
    return np.clip(wv @ P, 0.0, 1.0)


def plain_average(probabilities) -> np.ndarray:
    P = np.asarray(probabilities, dtype=np.float64)
    if P.ndim != 2:
        raise ValueError("probabilities must be n_models x m")
    return P.mean(axis=0)


def majority_vote(hard_labels) -> np.ndarray:
    """Per-row mode of {0,1} labels; exact ties go to class 1."""
    L = np.asarray(hard_labels)
    if L.ndim != 2:
        raise ValueError("hard_labels must be n_models x m")
    ones = L.sum(axis=0)
    return (2 * ones >= L.shape[0]).astype(np.int64)


def boosting_weight_update(sample_weights, alpha_t: float, margins) -> np.ndarray:
    """Multiplicative sample-weight update w * exp(-alpha * y*f(x)),
    renormalised to sum 1. Labels are encoded +/-1 inside the margins."""
    w = np.asarray(sample_weights, dtype=np.float64)
    m = np.asarray(margins, dtype=np.float64)
    if w.shape != m.shape:
        raise ValueError("sample_weights and margins length mismatch")
    out = w * np.exp(-alpha_t * m)
    total = out.sum()
    if total <= 0:
        raise ValueError("updated weights sum to zero")
    return out / total


def stack_meta_features(base_probabilities, plain_avg, weighted_avg) -> np.ndarray:
    """Assemble the meta-feature matrix [f_1 .. f_n, mean, weighted mean].

    Callers must pass out-of-fold base probabilities for training rows
    so no meta-feature was produced by a model trained on its own row.
    """
    P = np.asarray(base_probabilities, dtype=np.float64)
    a = np.asarray(plain_avg, dtype=np.float64)
    wa = np.asarray(weighted_avg, dtype=np.float64)
    if P.ndim != 2 or a.shape != (P.shape[1],) or wa.shape != (P.shape[1],):
        raise ValueError("inconsistent row counts")
    return np.column_stack([P.T, a, wa])


def out_of_fold_probabilities(fit_predict, y, folds: int = 5, seed: int = 0):
    """Out-of-fold probability vector over all rows.

    fit_predict(train_idx, test_idx) must train on the train rows only
    and return class-1 probabilities for the test rows. Returns the
    assembled vector plus each row's fold id for leakage audits.
    """
    y = np.asarray(y)
    oof = np.empty(y.size)
    fold_of = np.empty(y.size, dtype=np.int64)
    for f, (train_idx, test_idx) in enumerate(stratified_kfold(y, folds, seed)):
        oof[test_idx] = fit_predict(train_idx, test_idx)
        fold_of[test_idx] = f
    return oof, fold_of
