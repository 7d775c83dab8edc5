import math

import numpy as np
import pytest

from loanblend import metrics


def concordance_auc(y, s):
    """O(n^2) oracle: P(score+ > score-) + 0.5 * P(tie)."""
    y = np.asarray(y)
    s = np.asarray(s, dtype=np.float64)
    pos = s[y == 1]
    neg = s[y == 0]
    gt = np.sum(pos[:, None] > neg[None, :])
    eq = np.sum(pos[:, None] == neg[None, :])
    return (gt + 0.5 * eq) / (pos.size * neg.size)


class TestConfusion:
    def test_perfect(self):
        cm = metrics.confusion([1, 0, 1], [1, 0, 1])
        assert (cm.fp, cm.fn) == (0, 0)
        assert (cm.tp, cm.tn) == (2, 1)

    def test_all_wrong(self):
        cm = metrics.confusion([1, 0], [0, 1])
        assert (cm.tp, cm.tn) == (0, 0)

    def test_enumeration_fixture(self):
        cm = metrics.confusion([1, 1, 0, 0], [1, 0, 0, 1])
        assert (cm.tp, cm.fn, cm.tn, cm.fp) == (1, 1, 1, 1)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            metrics.confusion([1, 0], [1])


class TestPrecisionRecallF1:
    def test_precision_arithmetic(self):
        cm = metrics.ConfusionMatrix(tp=3, tn=0, fp=1, fn=0)
        rep = metrics.precision_recall_f1(cm)
        assert rep.per_class[1].precision == 0.75

    def test_f1_equals_when_precision_equals_recall(self):
        cm = metrics.ConfusionMatrix(tp=6, tn=10, fp=2, fn=2)
        rep = metrics.precision_recall_f1(cm)
        m = rep.per_class[1]
        assert m.precision == m.recall
        assert m.f1 == pytest.approx(m.precision)

    def test_zero_over_zero_convention(self):
        cm = metrics.ConfusionMatrix(tp=0, tn=5, fp=0, fn=3)
        with pytest.warns(UserWarning):
            rep = metrics.precision_recall_f1(cm)
        assert rep.per_class[1].precision == 0.0

    def test_macro_f1_symmetric_under_inversion(self):
        rng = np.random.default_rng(5)
        y = rng.integers(0, 2, 200)
        p = rng.integers(0, 2, 200)
        a = metrics.precision_recall_f1(metrics.confusion(y, p)).macro.f1
        b = metrics.precision_recall_f1(metrics.confusion(1 - y, 1 - p)).macro.f1
        assert a == pytest.approx(b, abs=1e-12)


class TestRocAuc:
    def test_perfect_ranking(self):
        _, auc = metrics.roc_auc([0, 0, 1, 1], [0.1, 0.2, 0.8, 0.9])
        assert auc == 1.0

    def test_reversed_ranking(self):
        _, auc = metrics.roc_auc([0, 0, 1, 1], [0.9, 0.8, 0.2, 0.1])
        assert auc == 0.0

    def test_matches_concordance_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            n = int(rng.integers(10, 120))
            y = rng.integers(0, 2, n)
            if y.min() == y.max():
                continue
            s = np.round(rng.random(n), 2)  # force ties
            _, auc = metrics.roc_auc(y, s)
            assert abs(auc - concordance_auc(y, s)) <= 1e-12

    def test_curve_endpoints_and_monotone(self):
        rng = np.random.default_rng(3)
        y = rng.integers(0, 2, 60)
        s = rng.random(60)
        roc, _ = metrics.roc_auc(y, s)
        assert roc.fpr[0] == 0.0 and roc.tpr[0] == 0.0
        assert roc.fpr[-1] == 1.0 and roc.tpr[-1] == 1.0
        assert np.all(np.diff(roc.fpr) >= 0)
        assert np.all(np.diff(roc.tpr) >= 0)
        assert np.all(np.diff(roc.thresholds) < 0)

    def test_complement_and_monotone_invariance(self):
        rng = np.random.default_rng(11)
        y = rng.integers(0, 2, 80)
        s = rng.standard_normal(80)  # ties have probability zero
        _, auc = metrics.roc_auc(y, s)
        _, auc_neg = metrics.roc_auc(y, -s)
        assert auc + auc_neg == pytest.approx(1.0, abs=1e-12)
        _, auc_t = metrics.roc_auc(y, np.exp(2.0 * s))
        assert auc_t == pytest.approx(auc, abs=1e-12)

    def test_single_class_rejected(self):
        with pytest.raises(ValueError):
            metrics.roc_auc([1, 1, 1], [0.1, 0.5, 0.9])


class TestBootstrapAuc:
    def test_perfect_scorer(self):
        y = np.array([0] * 30 + [1] * 30)
        s = y.astype(float)
        b = metrics.bootstrap_auc(y, s, n_boot=200, seed=1)
        assert b.mean == 1.0
        assert b.std == 0.0

    def test_seed_determinism(self):
        rng = np.random.default_rng(2)
        y = rng.integers(0, 2, 100)
        s = rng.random(100)
        a = metrics.bootstrap_auc(y, s, n_boot=100, seed=9)
        b = metrics.bootstrap_auc(y, s, n_boot=100, seed=9)
        assert (a.mean, a.std, a.ci_low, a.ci_high) == (b.mean, b.std, b.ci_low, b.ci_high)

    def test_ci_coverage_of_full_sample_auc(self):
        rng = np.random.default_rng(13)
        hits = 0
        for trial in range(50):
            n = 120
            y = rng.integers(0, 2, n)
            if y.min() == y.max():
                y[0] = 1 - y[0]
            s = rng.random(n) + 0.4 * y
            _, auc = metrics.roc_auc(y, s)
            b = metrics.bootstrap_auc(y, s, n_boot=200, seed=trial)
            if b.ci_low <= auc <= b.ci_high:
                hits += 1
        assert hits >= 45  # >= 90% of 50 outer trials

    def test_invariants(self):
        rng = np.random.default_rng(17)
        y = rng.integers(0, 2, 60)
        s = rng.random(60)
        b = metrics.bootstrap_auc(y, s, n_boot=150, seed=0)
        assert 0.0 <= b.ci_low <= b.mean <= b.ci_high <= 1.0


class TestBrierLogLoss:
    def test_brier_trivials(self):
        assert metrics.brier([1, 0], [1.0, 0.0]) == 0.0
        assert metrics.brier([1, 0, 1, 0], [0.5] * 4) == 0.25

    def test_brier_fixture(self):
        assert metrics.brier([1, 0], [0.8, 0.3]) == pytest.approx(0.065, abs=1e-15)

    def test_brier_base_rate_bound(self):
        y = np.array([0, 1] * 50)
        assert metrics.brier(y, np.full(100, y.mean())) <= 0.25

    def test_log_loss_uniform(self):
        assert metrics.log_loss([1, 0, 1], [0.5] * 3) == pytest.approx(math.log(2), abs=1e-12)

    def test_log_loss_perfect_clipped(self):
        assert metrics.log_loss([1, 0], [1.0, 0.0]) < 1e-10

    def test_log_loss_fixture(self):
        # -(ln 0.8 + ln 0.7) / 2 by calculator
        expected = -(math.log(0.8) + math.log(0.7)) / 2
        assert metrics.log_loss([1, 0], [0.8, 0.3]) == pytest.approx(expected, abs=1e-12)

    def test_brier_rejects_bad_probs(self):
        with pytest.raises(ValueError):
            metrics.brier([1], [1.2])


class TestCalibrationCurve:
    def test_identity_probs_on_diagonal(self):
        y = np.array([0, 1] * 40)
        curve = metrics.calibration_curve(y, y.astype(float), n_bins=10)
        for mp, orate, c in zip(curve.mean_predicted, curve.observed_rate, curve.counts):
            if c > 0:
                assert mp == pytest.approx(orate, abs=1e-12)

    def test_constant_prediction_single_bin(self):
        y = np.array([1] * 30 + [0] * 70)
        curve = metrics.calibration_curve(y, np.full(100, 0.3), n_bins=10)
        occupied = np.flatnonzero(curve.counts)
        assert occupied.size == 1
        b = occupied[0]
        assert curve.mean_predicted[b] == pytest.approx(0.3)
        assert curve.observed_rate[b] == pytest.approx(0.3)

    def test_counts_sum_to_n(self):
        rng = np.random.default_rng(23)
        y = rng.integers(0, 2, 77)
        p = rng.random(77)
        curve = metrics.calibration_curve(y, p, n_bins=7)
        assert curve.counts.sum() == 77
        assert curve.bin_edges[0] == 0.0 and curve.bin_edges[-1] == 1.0

    def test_min_bins(self):
        with pytest.raises(ValueError):
            metrics.calibration_curve([1, 0], [0.5, 0.5], n_bins=1)


class TestReportRendering:
    def test_render_and_csv_deterministic(self):
        rng = np.random.default_rng(29)
        y = rng.integers(0, 2, 200)
        p = np.clip(rng.random(200) * 0.6 + 0.2 * y, 0, 1)
        rep1 = metrics.evaluate_predictions("m", y, p, n_boot=50, seed=4)
        rep2 = metrics.evaluate_predictions("m", y, p, n_boot=50, seed=4)
        assert metrics.render_report(rep1) == metrics.render_report(rep2)
        assert metrics.roc_csv(rep1.roc) == metrics.roc_csv(rep2.roc)
        assert metrics.calibration_csv(rep1.calibration) == metrics.calibration_csv(rep2.calibration)
        text = metrics.render_report(rep1)
        assert "auc_boot_mean" in text and "[macro]" in text
