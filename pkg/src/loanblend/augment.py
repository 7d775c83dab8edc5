"""Class-imbalance handling: map numeric features to Gaussian via a
rank-based quantile transform, undersample the majority class to a
1.5:1 ratio, and synthesise minority rows with scaled Gaussian noise
until the classes balance."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

_ERFC = np.frompyfunc(math.erfc, 1, 1)

# Acklam's rational approximation of the inverse normal CDF.
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)
_P_LOW = 0.02425


def norm_cdf(x):
    x = np.asarray(x, dtype=np.float64)
    return 0.5 * _ERFC(-x / math.sqrt(2.0)).astype(np.float64)


def norm_ppf(p):
    """Inverse normal CDF: rational approximation plus one Halley step.

    Accurate to well below 1e-10 over (0, 1); infinite at the endpoints.
    """
    p = np.asarray(p, dtype=np.float64)
    if np.any(p < 0) or np.any(p > 1):
        raise ValueError("probabilities must lie in [0, 1]")
    out = np.empty_like(p)
    out[p == 0] = -np.inf
    out[p == 1] = np.inf
    interior = (p > 0) & (p < 1)
    pi_ = p[interior]

    x = np.empty_like(pi_)
    low = pi_ < _P_LOW
    high = pi_ > 1.0 - _P_LOW
    mid = ~(low | high)
    if low.any():
        q = np.sqrt(-2.0 * np.log(pi_[low]))
        x[low] = (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    if high.any():
        q = np.sqrt(-2.0 * np.log(1.0 - pi_[high]))
        x[high] = -(((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    if mid.any():
        q = pi_[mid] - 0.5
        r = q * q
        x[mid] = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / \
            (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0)

    # one Halley refinement against the erfc-based CDF
    err = norm_cdf(x) - pi_
    u = err * math.sqrt(2.0 * math.pi) * np.exp(x * x / 2.0)
    x = x - u / (1.0 + x * u / 2.0)
    out[interior] = x
    return out


@dataclass
class QuantileTransform:
    """Fitted per-feature ECDF support (sorted reference values)."""

    references: list  # one sorted 1-D array per feature

    @property
    def n_features(self) -> int:
        return len(self.references)


def _average_ranks(x):
    """1-based ranks with ties sharing their average rank."""
    _, inverse, counts = np.unique(x, return_inverse=True, return_counts=True)
    cum = np.cumsum(counts)
    avg = (cum - counts + 1 + cum) / 2.0
    return avg[inverse]


def quantile_fit_transform(X, y=None):
    """Fit the rank-to-normal transform column-wise and apply it.

    z_i = ppf(r_i / (N + 1)) with r_i the (average) rank, so output
    ranks equal input ranks and the extremes stay finite. Constant
    columns map to all zeros with a warning. Returns (transform, Z) and
    passes y through untouched.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("X must be 2-D")
    n = X.shape[0]
    refs = []
    Z = np.empty_like(X)
    for j in range(X.shape[1]):
        col = X[:, j]
        refs.append(np.sort(col))
        if col.min() == col.max():
            warnings.warn(f"feature {j} is constant; transformed to zeros")
            Z[:, j] = 0.0
            continue
        Z[:, j] = norm_ppf(_average_ranks(col) / (n + 1))
    qt = QuantileTransform(references=refs)
    if y is None:
        return qt, Z
    return qt, Z, y


def quantile_apply(qt: QuantileTransform, X) -> np.ndarray:
    """Transform new data through the fitted ECDF support.

    Values seen at fit time reproduce their fitted ranks; unseen values
    interpolate linearly between neighbouring references and the tails
    clamp half a rank beyond the extremes.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != qt.n_features:
        raise ValueError("X has the wrong number of features")
    Z = np.empty_like(X)
    for j, ref in enumerate(qt.references):
        n = ref.size
        if ref[0] == ref[-1]:
            Z[:, j] = 0.0
            continue
        x = X[:, j]
        lo = np.searchsorted(ref, x, side="left").astype(np.float64)
        hi = np.searchsorted(ref, x, side="right").astype(np.float64)
        rank = np.empty_like(x)
        exact = lo < hi
        rank[exact] = (lo[exact] + hi[exact] + 1.0) / 2.0
        miss = ~exact
        if miss.any():
            pos = lo[miss].astype(np.int64)
            r = np.empty(pos.size)
            below = pos == 0
            above = pos == n
            inner = ~(below | above)
            r[below] = 0.5
            r[above] = n + 0.5
            if inner.any():
                pi_ = pos[inner]
                left = ref[pi_ - 1]
                right = ref[pi_]
                frac = (x[miss][inner] - left) / (right - left)
                r[inner] = pi_ + frac
            rank[miss] = r
        p_min = 0.5 / (n + 1)
        Z[:, j] = norm_ppf(np.clip(rank / (n + 1), p_min, 1.0 - p_min))
    return Z


def _class_split(y):
    y = np.asarray(y)
    classes, counts = np.unique(y, return_counts=True)
    if classes.size != 2:
        raise ValueError("both classes must be present")
    minority = classes[np.argmin(counts)]
    majority = classes[np.argmax(counts)]
    if counts[0] == counts[1]:
        minority, majority = classes[0], classes[1]
    return minority, majority


def undersample_majority(X, y, ratio: float = 1.5, seed=0):
    """Keep floor(ratio * m) uniformly chosen majority rows (without
    replacement); minority rows are untouched. Row order follows the
    original index order."""
    X = np.asarray(X)
    y = np.asarray(y)
    minority, majority = _class_split(y)
    min_idx = np.flatnonzero(y == minority)
    maj_idx = np.flatnonzero(y == majority)
    target = int(math.floor(ratio * min_idx.size))
    if target > maj_idx.size:
        warnings.warn(
            f"requested {target} majority rows but only {maj_idx.size} exist; keeping all"
        )
        target = maj_idx.size
    rng = np.random.default_rng(seed)
    kept = rng.choice(maj_idx, size=target, replace=False)
    sel = np.sort(np.concatenate([min_idx, kept]))
    return X[sel], y[sel]


def gaussian_augment(X_min, count: int, noise_scale: float, seed=0, columns=None) -> np.ndarray:
    """Synthesise `count` rows: a uniformly chosen minority row plus
    N(0, (noise_scale * column std)^2) noise per column.

    `columns` optionally restricts noise to a boolean column mask (used
    to leave one-hot indicator columns intact).
    """
    if count < 0:
        raise ValueError("count must be >= 0")
    X_min = np.asarray(X_min, dtype=np.float64)
    if count == 0:
        return np.zeros((0, X_min.shape[1]))
    sigma = noise_scale * X_min.std(axis=0)
    if columns is not None:
        sigma = np.where(np.asarray(columns, dtype=bool), sigma, 0.0)
    rng = np.random.default_rng(seed)
    source = rng.integers(0, X_min.shape[0], size=count)
    eps = rng.standard_normal((count, X_min.shape[1])) * sigma
    return X_min[source] + eps


@dataclass
class AugmentationPlan:
    minority_count: int
    majority_target: int
    synthetic_count: int
    noise_scale: float = 0.05
    seed: int = 0

    @classmethod
    def from_counts(cls, minority_count: int, ratio: float = 1.5,
                    noise_scale: float = 0.05, seed: int = 0) -> "AugmentationPlan":
        target = int(math.floor(ratio * minority_count))
        return cls(
            minority_count=minority_count,
            majority_target=target,
            synthetic_count=target - minority_count,
            noise_scale=noise_scale,
            seed=seed,
        )


def balance(X, y, plan: AugmentationPlan, noise_columns=None):
    """Undersample the majority to the plan target, then add synthetic
    minority rows until the class counts are equal within +/- 1."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    minority, majority = _class_split(y)
    min_idx = np.flatnonzero(y == minority)
    maj_idx = np.flatnonzero(y == majority)
    if plan.minority_count != min_idx.size:
        raise ValueError(
            f"plan minority_count {plan.minority_count} does not match data ({min_idx.size})"
        )
    target = plan.majority_target
    if target > maj_idx.size:
        warnings.warn(
            f"plan wants {target} majority rows but only {maj_idx.size} exist; keeping all"
        )
        target = maj_idx.size
    rng = np.random.default_rng([plan.seed, 0])
    kept_maj = np.sort(rng.choice(maj_idx, size=target, replace=False))
    synth_count = target - min_idx.size
    synth = gaussian_augment(
        X[min_idx], synth_count, plan.noise_scale,
        seed=[plan.seed, 1], columns=noise_columns,
    )
    X_out = np.vstack([X[min_idx], X[kept_maj], synth])
    y_out = np.concatenate([
        y[min_idx],
        y[kept_maj],
        np.full(synth_count, minority, dtype=y.dtype),
    ])
    return X_out, y_out
