"""Hybrid outlier detection and correction for numeric columns.

Each column is segmented by a Gaussian change-point likelihood scan,
flagged per segment with IQR and Hampel rules, and corrected with a
sliding median filter. PCA is available as a diagnostic projection;
detection always runs in the original feature space.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

VARIANCE_FLOOR = 1e-12


@dataclass
class SegmentSet:
    change_points: np.ndarray  # sorted indices, each starts a new segment
    segments: list  # list of (start, end) half-open ranges tiling [0, N)
    log_likelihoods: np.ndarray  # accepted splits' likelihood gains


@dataclass
class OutlierFlags:
    indices: np.ndarray  # sorted row indices
    source: dict  # index -> "iqr" | "hampel" | "both"

    @property
    def count(self) -> int:
        return self.indices.size


@dataclass
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # D x k, orthonormal columns
    explained_variance_ratio: np.ndarray


@dataclass
class BcpHiConfig:
    iqr_k: float = 3.0
    hampel_k: float = 3.0
    window: int = 5
    max_changepoints: int = 10
    prior_penalty: float | None = None  # None -> 0.5 * ln(N) per split
    flag_policy: str = "union"  # union | intersect
    min_segment: int = 10  # keeps isolated spikes inside flaggable segments


def _segment_loglik(n, var):
    """Gaussian log likelihood of a segment at its MLE mean/variance."""
    v = max(var, VARIANCE_FLOOR)
    return -0.5 * n * (math.log(2.0 * math.pi * v) + 1.0)


def _best_split(s1, s2, a, b, min_seg):
    """Best two-segment likelihood gain for series slice [a, b).

    s1/s2 are prefix sums of values and squares over the whole series.
    Returns (gain_without_penalty, absolute_split_index) or None when the
    slice cannot be split with both halves >= min_seg.
    """
    n = b - a
    lo = max(2, min_seg)
    if n < 2 * lo:
        return None
    tot_sum = s1[b] - s1[a]
    tot_sq = s2[b] - s2[a]
    var_all = max(tot_sq / n - (tot_sum / n) ** 2, 0.0)
    base = _segment_loglik(n, var_all)

    t = np.arange(lo, n - lo + 1)  # local split offsets, each side >= min_seg
    left_sum = s1[a + t] - s1[a]
    left_sq = s2[a + t] - s2[a]
    right_sum = tot_sum - left_sum
    right_sq = tot_sq - left_sq
    n1 = t.astype(np.float64)
    n2 = n - n1
    var1 = np.maximum(left_sq / n1 - (left_sum / n1) ** 2, 0.0)
    var2 = np.maximum(right_sq / n2 - (right_sum / n2) ** 2, 0.0)
    v1 = np.maximum(var1, VARIANCE_FLOOR)
    v2 = np.maximum(var2, VARIANCE_FLOOR)
    loglik = (
        -0.5 * n1 * (np.log(2.0 * math.pi * v1) + 1.0)
        - 0.5 * n2 * (np.log(2.0 * math.pi * v2) + 1.0)
    )
    best = int(np.argmax(loglik))
    return float(loglik[best] - base), a + int(t[best])


def detect_changepoints(series, max_points: int, prior_penalty: float | None = None,
                        min_segment: int = 10) -> SegmentSet:
    """Recursive binary segmentation of a numeric series.

    At each step the split with the largest two-segment Gaussian
    log-likelihood gain minus prior_penalty is accepted; the search
    stops when no penalised gain is positive or max_points is reached.
    Segments never shrink below min_segment, so a lone spike cannot be
    walled off into a segment too small to screen.
    """
    x = np.asarray(series, dtype=np.float64)
    if x.size < 4:
        raise ValueError("series must have length >= 4")
    if not np.isfinite(x).all():
        raise ValueError("series must be finite")
    if prior_penalty is None:
        prior_penalty = 0.5 * math.log(x.size)

    s1 = np.concatenate([[0.0], np.cumsum(x)])
    s2 = np.concatenate([[0.0], np.cumsum(x * x)])

    accepted = []  # (split_index, penalised_gain)
    candidates = []
    first = _best_split(s1, s2, 0, x.size, min_segment)
    if first is not None:
        candidates.append((first[0], first[1], 0, x.size))
    while candidates and len(accepted) < max_points:
        candidates.sort(key=lambda c: (-c[0], c[1]))
        gain, cut, a, b = candidates.pop(0)
        if gain - prior_penalty <= 0.0:
            break
        accepted.append((cut, gain - prior_penalty))
        for lo, hi in ((a, cut), (cut, b)):
            nxt = _best_split(s1, s2, lo, hi, min_segment)
            if nxt is not None:
                candidates.append((nxt[0], nxt[1], lo, hi))

    accepted.sort(key=lambda p: p[0])
    points = np.asarray([p[0] for p in accepted], dtype=np.int64)
    gains = np.asarray([p[1] for p in accepted])
    bounds = np.concatenate([[0], points, [x.size]])
    segments = [(int(bounds[i]), int(bounds[i + 1])) for i in range(bounds.size - 1)]
    return SegmentSet(change_points=points, segments=segments, log_likelihoods=gains)


def iqr_flags(segment, k: float = 3.0) -> OutlierFlags:
    """Flag values outside [Q1 - k*IQR, Q3 + k*IQR] (type-7 quantiles)."""
    x = np.asarray(segment, dtype=np.float64)
    if x.size < 4:
        raise ValueError("segment must have length >= 4")
    q1, q3 = np.quantile(x, [0.25, 0.75])
    iqr = q3 - q1
    lo, hi = q1 - k * iqr, q3 + k * iqr
    idx = np.flatnonzero((x < lo) | (x > hi))
    return OutlierFlags(indices=idx, source={int(i): "iqr" for i in idx})


def hampel_flags(segment, k: float = 3.0) -> OutlierFlags:
    """Flag values deviating from the segment median by more than k MADs.

    When the MAD is zero every value different from the median is
    flagged.
    """
    x = np.asarray(segment, dtype=np.float64)
    if x.size < 3:
        raise ValueError("segment must have length >= 3")
    med = np.median(x)
    dev = np.abs(x - med)
    mad = np.median(dev)
    if mad == 0.0:
        idx = np.flatnonzero(dev > 0.0)
    else:
        idx = np.flatnonzero(dev > k * mad)
    return OutlierFlags(indices=idx, source={int(i): "hampel" for i in idx})


def merge_flags(a: OutlierFlags, b: OutlierFlags, policy: str = "union") -> OutlierFlags:
    sa, sb = set(int(i) for i in a.indices), set(int(i) for i in b.indices)
    if policy == "union":
        merged = sa | sb
    elif policy == "intersect":
        merged = sa & sb
    else:
        raise ValueError(f"unknown flag policy {policy!r}")
    source = {}
    for i in merged:
        if i in sa and i in sb:
            source[i] = "both"
        elif i in sa:
            source[i] = a.source[i]
        else:
            source[i] = b.source[i]
    idx = np.asarray(sorted(merged), dtype=np.int64)
    return OutlierFlags(indices=idx, source=source)


def _lower_median(values) -> float:
    v = np.sort(np.asarray(values, dtype=np.float64))
    return float(v[(v.size - 1) // 2])


def median_correct(series, flags: OutlierFlags, window: int = 5) -> np.ndarray:
    """Replace flagged values by the lower median of a centred window.

    Windows are truncated at the boundaries; the window reads the
    original (uncorrected) values and unflagged entries pass through
    bit-identical.
    """
    if window < 3 or window % 2 == 0:
        raise ValueError("window must be an odd integer >= 3")
    x = np.asarray(series, dtype=np.float64)
    out = x.copy()
    half = window // 2
    for i in flags.indices:
        i = int(i)
        lo = max(0, i - half)
        hi = min(x.size, i + half + 1)
        out[i] = _lower_median(x[lo:hi])
    return out


def pca_fit(X, variance_target: float = 0.95) -> PcaModel:
    """Principal components keeping the smallest count whose cumulative
    explained variance reaches the target. Diagnostics only."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("X must be 2-D with at least 2 rows")
    if not 0.0 < variance_target <= 1.0:
        raise ValueError("variance_target must lie in (0, 1]")
    mean = X.mean(axis=0)
    Xc = X - mean
    _, s, vt = np.linalg.svd(Xc, full_matrices=False)
    ev = s**2 / (X.shape[0] - 1)
    total = ev.sum()
    if total <= 0.0:
        warnings.warn("zero-variance data; retaining 0 components")
        return PcaModel(
            mean=mean,
            components=np.zeros((X.shape[1], 0)),
            explained_variance_ratio=np.zeros(0),
        )
    ratio = ev / total
    k = int(np.searchsorted(np.cumsum(ratio), variance_target - 1e-12) + 1)
    k = min(k, ratio.size)
    comps = vt[:k].T.copy()
    # deterministic sign: largest-magnitude loading of each component positive
    for j in range(k):
        pivot = np.argmax(np.abs(comps[:, j]))
        if comps[pivot, j] < 0:
            comps[:, j] = -comps[:, j]
    return PcaModel(mean=mean, components=comps, explained_variance_ratio=ratio[:k])


def pca_project(model: PcaModel, X) -> np.ndarray:
    return (np.asarray(X, dtype=np.float64) - model.mean) @ model.components


def pca_reconstruct(model: PcaModel, Y) -> np.ndarray:
    return np.asarray(Y, dtype=np.float64) @ model.components.T + model.mean


def run_bcp_hi(column, config: BcpHiConfig | None = None):
    """Full per-column pipeline: segment, flag per segment, correct.

    Returns (corrected column, flags, segments). Flag indices are in
    whole-column coordinates; correction windows also span the whole
    column so segment borders keep full context.
    """
    if config is None:
        config = BcpHiConfig()
    x = np.asarray(column, dtype=np.float64)
    segs = detect_changepoints(
        x, config.max_changepoints, config.prior_penalty, config.min_segment
    )
    all_idx = []
    source = {}
    for start, end in segs.segments:
        seg = x[start:end]
        if seg.size < 4:
            continue
        fi = iqr_flags(seg, config.iqr_k)
        fh = hampel_flags(seg, config.hampel_k)
        merged = merge_flags(fi, fh, config.flag_policy)
        for local in merged.indices:
            g = start + int(local)
            all_idx.append(g)
            source[g] = merged.source[int(local)]
    flags = OutlierFlags(indices=np.asarray(sorted(all_idx), dtype=np.int64), source=source)
    corrected = median_correct(x, flags, config.window)
    return corrected, flags, segs


@dataclass
class ColumnBounds:
    """Train-fitted whole-column thresholds for applying to held-out rows."""

    iqr_low: float
    iqr_high: float
    median: float
    mad: float
    iqr_k: float
    hampel_k: float
    flag_policy: str


def fit_column_bounds(train_column, config: BcpHiConfig | None = None) -> ColumnBounds:
    if config is None:
        config = BcpHiConfig()
    x = np.asarray(train_column, dtype=np.float64)
    q1, q3 = np.quantile(x, [0.25, 0.75])
    iqr = q3 - q1
    med = float(np.median(x))
    mad = float(np.median(np.abs(x - med)))
    return ColumnBounds(
        iqr_low=float(q1 - config.iqr_k * iqr),
        iqr_high=float(q3 + config.iqr_k * iqr),
        median=med,
        mad=mad,
        iqr_k=config.iqr_k,
        hampel_k=config.hampel_k,
        flag_policy=config.flag_policy,
    )


def apply_column_bounds(column, bounds: ColumnBounds, window: int = 5):
    """Flag a held-out column against train-fitted thresholds and correct
    flagged entries with a median filter over the held-out series."""
    x = np.asarray(column, dtype=np.float64)
    iqr_out = (x < bounds.iqr_low) | (x > bounds.iqr_high)
    dev = np.abs(x - bounds.median)
    if bounds.mad == 0.0:
        hampel_out = dev > 0.0
    else:
        hampel_out = dev > bounds.hampel_k * bounds.mad
    if bounds.flag_policy == "union":
        mask = iqr_out | hampel_out
    else:
        mask = iqr_out & hampel_out
    idx = np.flatnonzero(mask)
    source = {}
    for i in idx:
        i = int(i)
        if iqr_out[i] and hampel_out[i]:
            source[i] = "both"
        elif iqr_out[i]:
            source[i] = "iqr"
        else:
            source[i] = "hampel"
    flags = OutlierFlags(indices=idx, source=source)
    return median_correct(x, flags, window), flags
