import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hgfactor.metrics import (build_report, daily_ic, daily_rank_ic,
                              hidden_recovery, icir, recovery_null_band)


class TestDailyIC:
    def test_perfect_positive(self):
        v = np.array([1.0, 2.0, 3.0, 4.0])
        assert daily_ic(v, 2.0 * v + 1.0) == pytest.approx(1.0)

    def test_perfect_negative(self):
        v = np.array([1.0, 2.0, 3.0])
        assert daily_ic(v, -v) == pytest.approx(-1.0)

    def test_hand_computed(self):
        pred = np.array([1.0, 2.0, 3.0])
        lab = np.array([1.0, 3.0, 2.0])
        assert daily_ic(pred, lab) == pytest.approx(0.5)

    def test_nan_stocks_dropped(self):
        pred = np.array([1.0, 2.0, 3.0, 99.0])
        lab = np.array([2.0, 4.0, 6.0, np.nan])
        assert daily_ic(pred, lab) == pytest.approx(1.0)

    def test_degenerate_cases(self):
        assert np.isnan(daily_ic(np.ones(5), np.arange(5.0)))
        assert np.isnan(daily_ic(np.arange(5.0), np.ones(5)))
        assert np.isnan(daily_ic(np.array([1.0, 2.0]), np.array([1.0, 2.0])))

    @given(st.integers(0, 2 ** 31 - 1))
    @settings(max_examples=25, deadline=None)
    def test_shift_scale_invariance(self, seed):
        rng = np.random.default_rng(seed)
        pred = rng.standard_normal(10)
        lab = rng.standard_normal(10)
        base = daily_ic(pred, lab)
        moved = daily_ic(3.0 * pred + 7.0, 0.5 * lab - 2.0)
        assert moved == pytest.approx(base, abs=1e-10)


class TestRankIC:
    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(3)
        pred = rng.standard_normal(20)
        lab = rng.standard_normal(20)
        base = daily_rank_ic(pred, lab)
        warped = daily_rank_ic(np.exp(pred), lab ** 3)
        assert warped == pytest.approx(base, abs=1e-12)

    def test_agrees_with_pearson_on_ranks(self):
        pred = np.array([0.1, 0.9, 0.4, 0.2])
        lab = np.array([1.0, 4.0, 2.0, 3.0])
        ranks = lambda v: np.argsort(np.argsort(v)).astype(float)
        assert daily_rank_ic(pred, lab) == pytest.approx(
            daily_ic(ranks(pred), ranks(lab)))


class TestICIR:
    def test_hand_computed(self):
        s = [0.1, 0.2, 0.3]
        assert icir(s) == pytest.approx(0.2 / np.std(s, ddof=1))

    def test_constant_series_undefined(self):
        assert np.isnan(icir([0.25, 0.25, 0.25]))

    def test_single_day_undefined(self):
        assert np.isnan(icir([0.2]))

    def test_nan_days_skipped(self):
        assert icir([0.1, np.nan, 0.3]) == pytest.approx(icir([0.1, 0.3]))


class TestBuildReport:
    def test_aggregation_and_exclusions(self):
        daily = np.array([[0.1, np.nan], [0.3, 0.2], [np.nan, 0.4]])
        report = build_report(daily, (1, 5), tag="x")
        np.testing.assert_allclose(report.ic, [0.2, 0.3])
        np.testing.assert_array_equal(report.n_excluded, [1, 1])
        assert report.n_days == 3 and report.tag == "x"

    def test_all_nan_column(self):
        report = build_report(np.full((4, 1), np.nan), (1,))
        assert np.isnan(report.ic[0]) and report.n_excluded[0] == 4


class TestHiddenRecovery:
    def test_exact_recovery_scores_one(self):
        rng = np.random.default_rng(0)
        true = rng.beta(2.0, 2.0, (40, 3))
        learned = true[:, [2, 0, 1]]  # permuted copy
        max_s, greedy_s = hidden_recovery(learned, true)
        assert max_s == pytest.approx(1.0)
        assert greedy_s == pytest.approx(1.0)

    def test_sign_flip_invariance(self):
        rng = np.random.default_rng(1)
        true = rng.standard_normal((40, 3))
        assert hidden_recovery(-true, true)[1] == pytest.approx(1.0)

    def test_affine_column_invariance(self):
        rng = np.random.default_rng(2)
        true = rng.standard_normal((30, 2))
        learned = 5.0 * true + 1.0
        assert hidden_recovery(learned, true)[0] == pytest.approx(1.0)

    def test_greedy_enforces_one_to_one(self):
        # one learned column matching both true columns can only serve one
        rng = np.random.default_rng(3)
        shared = rng.standard_normal(50)
        true = np.column_stack([shared, shared + 1e-12 * rng.standard_normal(50)])
        learned = np.column_stack([shared, rng.standard_normal(50)])
        max_s, greedy_s = hidden_recovery(learned, true)
        assert max_s == pytest.approx(1.0, abs=1e-6)
        assert greedy_s < 0.8

    def test_noise_scores_low(self):
        rng = np.random.default_rng(4)
        true = rng.beta(2.0, 2.0, (200, 4))
        learned = rng.standard_normal((200, 4))
        _, greedy_s = hidden_recovery(learned, true)
        assert greedy_s < 0.3

    def test_constant_learned_columns_ignored(self):
        rng = np.random.default_rng(5)
        true = rng.standard_normal((30, 2))
        learned = np.column_stack([np.ones(30), true[:, 0]])
        max_s, greedy_s = hidden_recovery(learned, true)
        assert np.isfinite(max_s) and np.isfinite(greedy_s)

    def test_shape_validation(self):
        with pytest.raises(ValueError, match="stock counts"):
            hidden_recovery(np.ones((5, 2)), np.ones((6, 2)))
        with pytest.raises(ValueError, match="no true factor"):
            hidden_recovery(np.ones((5, 2)), np.ones((5, 0)))


class TestRecoveryNullBand:
    def test_null_band_separates_signal_from_noise(self):
        band = recovery_null_band(100, 8, 4, n_perm=200, seed=0)
        assert 0.0 < band < 0.5
        # a real match scores far above the null band
        rng = np.random.default_rng(6)
        true = rng.beta(2.0, 2.0, (100, 4))
        assert hidden_recovery(true, true)[1] > band

    def test_deterministic(self):
        a = recovery_null_band(50, 4, 2, n_perm=50, seed=3)
        b = recovery_null_band(50, 4, 2, n_perm=50, seed=3)
        assert a == b
