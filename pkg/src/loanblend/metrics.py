"""Evaluation suite for binary probabilistic classifiers.

Confusion counts, per-class / macro precision-recall-F1, ROC with
trapezoidal AUC, bootstrapped AUC confidence intervals, Brier score,
log loss and calibration curves.
"""

from __future__ import annotations

import io
import warnings
from dataclasses import dataclass, field

import numpy as np


@dataclass
class ConfusionMatrix:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


@dataclass
class ClassMetrics:
    precision: float
    recall: float
    f1: float


@dataclass
class ClassificationReport:
    per_class: dict  # label (0/1) -> ClassMetrics
    macro: ClassMetrics


@dataclass
class RocCurve:
    thresholds: np.ndarray  # descending, leading +inf
    fpr: np.ndarray
    tpr: np.ndarray


@dataclass
class BootstrapAuc:
    mean: float
    std: float
    ci_low: float
    ci_high: float
    n_boot: int
    seed: int
    n_degenerate: int = 0


@dataclass
class CalibrationCurve:
    bin_edges: np.ndarray  # length n_bins + 1, partitioning [0, 1]
    mean_predicted: np.ndarray  # nan for empty bins
    observed_rate: np.ndarray  # nan for empty bins
    counts: np.ndarray


def _as_binary(y, name):
    arr = np.asarray(y)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-D")
    if not np.isin(arr, (0, 1)).all():
        raise ValueError(f"{name} must contain only 0/1 values")
    return arr.astype(np.int64)


def confusion(y_true, y_pred) -> ConfusionMatrix:
    """Count tp/tn/fp/fn with class 1 as the positive class."""
    yt = _as_binary(y_true, "y_true")
    yp = _as_binary(y_pred, "y_pred")
    if yt.shape != yp.shape:
        raise ValueError("y_true and y_pred length mismatch")
    tp = int(np.sum((yt == 1) & (yp == 1)))
    tn = int(np.sum((yt == 0) & (yp == 0)))
    fp = int(np.sum((yt == 0) & (yp == 1)))
    fn = int(np.sum((yt == 1) & (yp == 0)))
    return ConfusionMatrix(tp=tp, tn=tn, fp=fp, fn=fn)


def _safe_ratio(num, den, what):
    if den == 0:
        warnings.warn(f"{what} is 0/0; reporting 0 by convention", stacklevel=3)
        return 0.0
    return num / den


def precision_recall_f1(cm: ConfusionMatrix) -> ClassificationReport:
    """Per-class precision/recall/F1 plus the unweighted macro average.

    Class-0 metrics are the class-1 formulas after label inversion
    (tp<->tn, fp<->fn). Undefined 0/0 ratios are reported as 0 with a
    warning.
    """

    def one_class(tp, fp, fn, label):
        p = _safe_ratio(tp, tp + fp, f"precision[{label}]")
        r = _safe_ratio(tp, tp + fn, f"recall[{label}]")
        f1 = _safe_ratio(2 * p * r, p + r, f"f1[{label}]")
        return ClassMetrics(precision=p, recall=r, f1=f1)

    c1 = one_class(cm.tp, cm.fp, cm.fn, 1)
    c0 = one_class(cm.tn, cm.fn, cm.fp, 0)
    macro = ClassMetrics(
        precision=(c0.precision + c1.precision) / 2,
        recall=(c0.recall + c1.recall) / 2,
        f1=(c0.f1 + c1.f1) / 2,
    )
    return ClassificationReport(per_class={0: c0, 1: c1}, macro=macro)


def roc_auc(y_true, scores) -> tuple[RocCurve, float]:
    """ROC curve over all score thresholds and its trapezoidal AUC.

    Tied scores are grouped into a single curve step, which makes the
    trapezoid area equal to the pairwise concordance probability
    P(score+ > score-) + 0.5 * P(tie).
    """
    yt = _as_binary(y_true, "y_true")
    s = np.asarray(scores, dtype=np.float64)
    if yt.shape != s.shape:
        raise ValueError("y_true and scores length mismatch")
    n_pos = int(yt.sum())
    n_neg = yt.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("roc_auc requires both classes present")
    order = np.argsort(-s, kind="stable")
    ys = yt[order]
    ss = s[order]
    # last index of each tied-score group
    group_end = np.nonzero(np.diff(ss))[0]
    group_end = np.concatenate([group_end, [ss.size - 1]])
    tp = np.cumsum(ys)[group_end]
    fp = np.cumsum(1 - ys)[group_end]
    tpr = np.concatenate([[0.0], tp / n_pos])
    fpr = np.concatenate([[0.0], fp / n_neg])
    thresholds = np.concatenate([[np.inf], ss[group_end]])
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
    return RocCurve(thresholds=thresholds, fpr=fpr, tpr=tpr), auc


def bootstrap_auc(y_true, scores, n_boot: int, seed: int) -> BootstrapAuc:
    """Bootstrap the AUC by resampling (label, score) pairs with replacement.

    Single-class resamples are skipped and counted. The 95% interval is
    the empirical 2.5/97.5 percentile of the retained AUCs.
    """
    if n_boot < 2:
        raise ValueError("n_boot must be >= 2")
    yt = _as_binary(y_true, "y_true")
    s = np.asarray(scores, dtype=np.float64)
    rng = np.random.default_rng(seed)
    aucs = []
    n_degenerate = 0
    n = yt.size
    for _ in range(n_boot):
        idx = rng.integers(0, n, size=n)
        yb = yt[idx]
        if yb.min() == yb.max():
            n_degenerate += 1
            continue
        aucs.append(roc_auc(yb, s[idx])[1])
    if not aucs:
        raise ValueError("all bootstrap resamples were single-class")
    aucs = np.asarray(aucs)
    mean = float(aucs.mean())
    std = float(aucs.std(ddof=1)) if aucs.size > 1 else 0.0
    lo, hi = np.percentile(aucs, [2.5, 97.5])
    # a >97.5% mass pile-up on one side can leave the mean outside the
    # interpolated percentiles; widen so ci_low <= mean <= ci_high holds
    lo = min(float(lo), mean)
    hi = max(float(hi), mean)
    return BootstrapAuc(
        mean=mean, std=std, ci_low=lo, ci_high=hi, n_boot=n_boot,
        seed=seed, n_degenerate=n_degenerate,
    )


def brier(y_true, probs) -> float:
    """Mean squared difference between probabilities and outcomes."""
    yt = _as_binary(y_true, "y_true")
    p = np.asarray(probs, dtype=np.float64)
    if yt.shape != p.shape:
        raise ValueError("y_true and probs length mismatch")
    if np.any(p < 0) or np.any(p > 1):
        raise ValueError("probabilities must lie in [0, 1]")
    return float(np.mean((yt - p) ** 2))


def log_loss(y_true, probs, eps: float = 1e-15) -> float:
    """Mean negative log likelihood with probabilities clipped to [eps, 1-eps]."""
    yt = _as_binary(y_true, "y_true")
    p = np.clip(np.asarray(probs, dtype=np.float64), eps, 1.0 - eps)
    if yt.shape != p.shape:
        raise ValueError("y_true and probs length mismatch")
    return float(-np.mean(yt * np.log(p) + (1 - yt) * np.log(1 - p)))


def calibration_curve(y_true, probs, n_bins: int = 10) -> CalibrationCurve:
    """Equal-width reliability bins on [0, 1]; empty bins kept with count 0."""
    if n_bins < 2:
        raise ValueError("n_bins must be >= 2")
    yt = _as_binary(y_true, "y_true")
    p = np.asarray(probs, dtype=np.float64)
    if np.any(p < 0) or np.any(p > 1):
        raise ValueError("probabilities must lie in [0, 1]")
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    # right-open bins except the last, which includes 1.0
    which = np.minimum((p * n_bins).astype(np.int64), n_bins - 1)
    counts = np.bincount(which, minlength=n_bins)
    mean_pred = np.full(n_bins, np.nan)
    obs_rate = np.full(n_bins, np.nan)
    for b in range(n_bins):
        mask = which == b
        if counts[b] > 0:
            mean_pred[b] = p[mask].mean()
            obs_rate[b] = yt[mask].mean()
    return CalibrationCurve(
        bin_edges=edges, mean_predicted=mean_pred,
        observed_rate=obs_rate, counts=counts,
    )


@dataclass
class EvaluationReport:
    """All evaluation outputs for one model on one labelled set."""

    model_name: str
    confusion_matrix: ConfusionMatrix
    classification: ClassificationReport
    roc: RocCurve
    auc: float
    bootstrap: BootstrapAuc
    brier: float
    log_loss: float
    calibration: CalibrationCurve
    threshold: float = 0.5


def evaluate_predictions(
    model_name: str,
    y_true,
    probs,
    threshold: float = 0.5,
    n_boot: int = 200,
    seed: int = 0,
    n_bins: int = 10,
) -> EvaluationReport:
    """Run the full metric suite on one probability vector."""
    probs = np.asarray(probs, dtype=np.float64)
    y_pred = (probs >= threshold).astype(np.int64)
    cm = confusion(y_true, y_pred)
    roc, auc = roc_auc(y_true, probs)
    return EvaluationReport(
        model_name=model_name,
        confusion_matrix=cm,
        classification=precision_recall_f1(cm),
        roc=roc,
        auc=auc,
        bootstrap=bootstrap_auc(y_true, probs, n_boot=n_boot, seed=seed),
        brier=brier(y_true, probs),
        log_loss=log_loss(y_true, probs),
        calibration=calibration_curve(y_true, probs, n_bins=n_bins),
        threshold=threshold,
    )


def render_report(report: EvaluationReport) -> str:
    """Serialize a report as a structured text document with stable key order."""
    out = io.StringIO()
    w = out.write
    cm = report.confusion_matrix
    w(f"model: {report.model_name}\n")
    w(f"threshold: {report.threshold!r}\n")
    w("[confusion]\n")
    w(f"tp: {cm.tp}\ntn: {cm.tn}\nfp: {cm.fp}\nfn: {cm.fn}\n")
    for label in (0, 1):
        m = report.classification.per_class[label]
        w(f"[class_{label}]\n")
        w(f"precision: {m.precision!r}\nrecall: {m.recall!r}\nf1: {m.f1!r}\n")
    m = report.classification.macro
    w("[macro]\n")
    w(f"precision: {m.precision!r}\nrecall: {m.recall!r}\nf1: {m.f1!r}\n")
    w("[ranking]\n")
    w(f"auc: {report.auc!r}\n")
    b = report.bootstrap
    w(f"auc_boot_mean: {b.mean!r}\nauc_boot_std: {b.std!r}\n")
    w(f"auc_ci_low: {b.ci_low!r}\nauc_ci_high: {b.ci_high!r}\n")
    w(f"n_boot: {b.n_boot}\nn_degenerate: {b.n_degenerate}\n")
    w("[calibration]\n")
    w(f"brier: {report.brier!r}\nlog_loss: {report.log_loss!r}\n")
    w(f"n_bins: {report.calibration.counts.size}\n")
    return out.getvalue()


def roc_csv(roc: RocCurve) -> str:
    lines = ["fpr,tpr,threshold"]
    for f, t, th in zip(roc.fpr, roc.tpr, roc.thresholds):
        lines.append(f"{float(f)!r},{float(t)!r},{float(th)!r}")
    return "\n".join(lines) + "\n"


def calibration_csv(curve: CalibrationCurve) -> str:
    lines = ["bin_mid,mean_pred,obs_rate,count"]
    edges = curve.bin_edges
    for i in range(curve.counts.size):
        mid = float(edges[i] + edges[i + 1]) / 2.0
        lines.append(
            f"{mid!r},{float(curve.mean_predicted[i])!r},"
            f"{float(curve.observed_rate[i])!r},{int(curve.counts[i])}"
        )
    return "\n".join(lines) + "\n"
