import math

import numpy as np
import pytest

from loanblend import outlier


def gaussian_loglik(x):
    v = max(np.var(x), 1e-12)
    return -0.5 * x.size * (math.log(2 * math.pi * v) + 1)


def best_split_oracle(x):
    """Exhaustive single-split likelihood scan."""
    best_gain, best_t = -np.inf, None
    base = gaussian_loglik(x)
    for t in range(2, x.size - 1):
        gain = gaussian_loglik(x[:t]) + gaussian_loglik(x[t:]) - base
    # second pass to return argmax (kept simple and obvious)
        if gain > best_gain:
            best_gain, best_t = gain, t
    return best_t, best_gain


class TestChangepoints:
    def test_step_series_single_point(self):
        series = np.concatenate([np.zeros(50), np.full(50, 10.0)])
        segs = outlier.detect_changepoints(series, max_points=3)
        assert segs.change_points.size == 1
        assert abs(int(segs.change_points[0]) - 50) <= 1

    def test_matches_exhaustive_oracle_on_first_split(self):
        rng = np.random.default_rng(0)
        series = np.concatenate([rng.normal(0, 1, 60), rng.normal(5, 1, 40)])
        t_oracle, _ = best_split_oracle(series)
        segs = outlier.detect_changepoints(
            series, max_points=1, prior_penalty=0.0, min_segment=2
        )
        assert int(segs.change_points[0]) == t_oracle

    def test_constant_series_no_points(self):
        segs = outlier.detect_changepoints(np.ones(80), max_points=5)
        assert segs.change_points.size == 0
        assert segs.segments == [(0, 80)]

    def test_iid_noise_monte_carlo(self):
        clean = 0
        for seed in range(100):
            x = np.random.default_rng(seed).standard_normal(200)
            segs = outlier.detect_changepoints(x, max_points=5, prior_penalty=10.0)
            if segs.change_points.size == 0:
                clean += 1
        assert clean >= 95

    def test_two_block_concat_property(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            n1 = int(rng.integers(10, 40))
            n2 = int(rng.integers(10, 40))
            a, b = rng.uniform(-5, 5, 2)
            if abs(a - b) < 1.0:
                b = a + 2.0
            series = np.concatenate([np.full(n1, a), np.full(n2, b)])
            segs = outlier.detect_changepoints(series, max_points=1)
            assert segs.change_points.size == 1
            assert abs(int(segs.change_points[0]) - n1) <= 1

    def test_segments_tile_range(self):
        rng = np.random.default_rng(9)
        series = rng.standard_normal(120).cumsum()
        segs = outlier.detect_changepoints(series, max_points=4)
        bounds = [0]
        for start, end in segs.segments:
            assert start == bounds[-1]
            bounds.append(end)
        assert bounds[-1] == 120

    def test_short_series_rejected(self):
        with pytest.raises(ValueError):
            outlier.detect_changepoints([1.0, 2.0, 3.0], max_points=1)


class TestIqrFlags:
    def test_single_extreme_point(self):
        x = np.concatenate([np.arange(1.0, 101.0), [1000.0]])
        flags = outlier.iqr_flags(x, k=3.0)
        assert list(flags.indices) == [100]
        assert flags.source[100] == "iqr"

    def test_tight_data_empty(self):
        x = np.asarray([4.0, 5.0, 5.0, 6.0, 5.0, 5.5, 4.5])
        assert outlier.iqr_flags(x, k=3.0).count == 0

    def test_smaller_k_flags_superset(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            x = rng.standard_normal(60) * rng.uniform(0.5, 4.0)
            loose = set(outlier.iqr_flags(x, k=3.0).indices.tolist())
            tight = set(outlier.iqr_flags(x, k=1.5).indices.tolist())
            assert loose <= tight

    def test_matches_quantile_oracle(self):
        rng = np.random.default_rng(8)
        x = rng.standard_normal(101) ** 3
        q1, q3 = np.quantile(x, [0.25, 0.75])  # type-7 linear interpolation
        lo, hi = q1 - 3 * (q3 - q1), q3 + 3 * (q3 - q1)
        expect = sorted(i for i, v in enumerate(x) if v < lo or v > hi)
        assert list(outlier.iqr_flags(x, k=3.0).indices) == expect


class TestHampelFlags:
    def test_mad_zero_rule(self):
        flags = outlier.hampel_flags([5.0, 5.0, 5.0, 5.0, 50.0], k=3.0)
        assert list(flags.indices) == [4]

    def test_all_equal_empty(self):
        assert outlier.hampel_flags([7.0] * 9, k=3.0).count == 0

    def test_hand_mad_oracle(self):
        x = np.asarray([0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 10.0])
        med = np.median(x)
        mad = np.median(np.abs(x - med))
        expect = sorted(i for i, v in enumerate(x) if abs(v - med) > 3.0 * mad)
        assert list(outlier.hampel_flags(x, k=3.0).indices) == expect

    def test_flags_depend_on_value_and_multiset_only(self):
        rng = np.random.default_rng(5)
        x = np.concatenate([rng.standard_normal(40), [25.0, -30.0]])
        perm = rng.permutation(x.size)
        f1 = outlier.hampel_flags(x, k=3.0)
        f2 = outlier.hampel_flags(x[perm], k=3.0)
        flagged_values_1 = sorted(x[f1.indices].tolist())
        flagged_values_2 = sorted(x[perm][f2.indices].tolist())
        assert flagged_values_1 == flagged_values_2


class TestMedianCorrect:
    def flags(self, idx):
        return outlier.OutlierFlags(
            indices=np.asarray(idx, dtype=np.int64),
            source={int(i): "iqr" for i in idx},
        )

    def test_window_median(self):
        out = outlier.median_correct([1.0, 100.0, 3.0], self.flags([1]), window=3)
        np.testing.assert_array_equal(out, [1.0, 3.0, 3.0])

    def test_empty_flags_identity(self):
        x = np.asarray([3.0, 1.0, 4.0, 1.0, 5.0])
        out = outlier.median_correct(x, self.flags([]), window=3)
        np.testing.assert_array_equal(out, x)

    def test_boundary_truncation_lower_median(self):
        # window at index 0 truncates to {x0, x1}; lower median is min
        out = outlier.median_correct([9.0, 2.0, 7.0], self.flags([0]), window=3)
        assert out[0] == 2.0

    def test_even_window_rejected(self):
        with pytest.raises(ValueError):
            outlier.median_correct([1.0, 2.0, 3.0], self.flags([0]), window=4)

    def test_unflagged_bit_identical(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal(30)
        out = outlier.median_correct(x, self.flags([4, 20]), window=5)
        keep = np.ones(30, dtype=bool)
        keep[[4, 20]] = False
        assert (out[keep] == x[keep]).all()


class TestPca:
    def test_rank_one(self):
        rng = np.random.default_rng(1)
        direction = np.asarray([1.0, 2.0, -1.0])
        X = np.outer(rng.standard_normal(40), direction)
        model = outlier.pca_fit(X, variance_target=0.95)
        assert model.components.shape[1] == 1
        assert model.explained_variance_ratio[0] == pytest.approx(1.0)

    def test_isotropic_needs_both_components(self):
        rng = np.random.default_rng(6)
        X = rng.standard_normal((500, 2))
        # eigenvalue oracle: covariance eigenvalues are near-equal, so one
        # component cannot reach 95%
        evals = np.sort(np.linalg.eigvalsh(np.cov(X.T)))[::-1]
        assert evals[0] / evals.sum() < 0.95
        model = outlier.pca_fit(X, variance_target=0.95)
        assert model.components.shape[1] == 2

    def test_reconstruction_exact_on_rank_one(self):
        rng = np.random.default_rng(7)
        X = np.outer(rng.standard_normal(25), [0.5, -1.5, 2.0]) + 3.0
        model = outlier.pca_fit(X, variance_target=0.95)
        Xr = outlier.pca_reconstruct(model, outlier.pca_project(model, X))
        assert np.abs(Xr - X).max() < 1e-8

    def test_orthonormal_columns(self):
        rng = np.random.default_rng(8)
        X = rng.standard_normal((60, 5)) @ rng.standard_normal((5, 5))
        model = outlier.pca_fit(X, variance_target=1.0)
        W = model.components
        np.testing.assert_allclose(W.T @ W, np.eye(W.shape[1]), atol=1e-8)
        assert np.all(np.diff(model.explained_variance_ratio) <= 1e-12)

    def test_zero_variance_warns(self):
        with pytest.warns(UserWarning):
            model = outlier.pca_fit(np.ones((5, 3)), variance_target=0.95)
        assert model.components.shape[1] == 0


def spike_series(rng, n=400, n_spikes=5):
    """Smooth two-level series with bounded noise plus extreme spikes.

    Bounded noise keeps every inlier within 3 MADs of its segment median
    for any segmentation, so corrections converge after one pass.
    """
    base = np.where(np.arange(n) < n // 2, 10.0, 12.0) + rng.uniform(-0.1, 0.1, n)
    idx = np.linspace(40, n - 40, n_spikes).astype(int)
    series = base.copy()
    series[idx] = 50.0 * np.median(base)
    return series, idx


class TestRunBcpHi:
    def test_injected_spikes_flagged_and_corrected(self):
        rng = np.random.default_rng(21)
        series, idx = spike_series(rng)
        corrected, flags, _ = outlier.run_bcp_hi(series)
        assert set(idx.tolist()) <= set(flags.indices.tolist())
        assert corrected.max() < 5.0 * np.median(series)

    def test_clean_constant_identity(self):
        x = np.full(50, 3.25)
        corrected, flags, segs = outlier.run_bcp_hi(x)
        np.testing.assert_array_equal(corrected, x)
        assert flags.count == 0
        assert segs.change_points.size == 0

    def test_flags_are_union_of_detectors_per_segment(self):
        rng = np.random.default_rng(22)
        series, _ = spike_series(rng)
        cfg = outlier.BcpHiConfig()
        corrected, flags, segs = outlier.run_bcp_hi(series, cfg)
        expect = set()
        for start, end in segs.segments:
            seg = series[start:end]
            if seg.size < 4:
                continue
            fi = outlier.iqr_flags(seg, cfg.iqr_k)
            fh = outlier.hampel_flags(seg, cfg.hampel_k)
            expect |= {start + int(i) for i in fi.indices}
            expect |= {start + int(i) for i in fh.indices}
        assert set(flags.indices.tolist()) == expect

    def test_idempotent_on_spike_fixture(self):
        rng = np.random.default_rng(23)
        series, _ = spike_series(rng)
        once, _, _ = outlier.run_bcp_hi(series)
        twice, flags2, _ = outlier.run_bcp_hi(once)
        np.testing.assert_array_equal(once, twice)
        assert flags2.count == 0

    def test_correction_locality(self):
        rng = np.random.default_rng(24)
        series, _ = spike_series(rng)
        corrected, flags, _ = outlier.run_bcp_hi(series)
        keep = np.ones(series.size, dtype=bool)
        keep[flags.indices] = False
        assert (corrected[keep] == series[keep]).all()

    def test_flag_policy_intersect(self):
        rng = np.random.default_rng(25)
        series, _ = spike_series(rng)
        cfg = outlier.BcpHiConfig(flag_policy="intersect")
        _, flags, segs = outlier.run_bcp_hi(series, cfg)
        cfg_union = outlier.BcpHiConfig(flag_policy="union")
        _, union_flags, _ = outlier.run_bcp_hi(series, cfg_union)
        assert set(flags.indices.tolist()) <= set(union_flags.indices.tolist())


class TestColumnBounds:
    def test_apply_matches_fit_thresholds(self):
        rng = np.random.default_rng(31)
        train = rng.normal(5, 1, 300)
        bounds = outlier.fit_column_bounds(train)
        test = np.concatenate([rng.normal(5, 1, 60), [40.0]])
        corrected, flags = outlier.apply_column_bounds(test, bounds, window=5)
        assert 60 in flags.indices
        assert corrected[60] != test[60]
        keep = np.ones(61, dtype=bool)
        keep[flags.indices] = False
        assert (corrected[keep] == test[keep]).all()
