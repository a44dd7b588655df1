import numpy as np
import pytest

import curvecast as cc
from curvecast.exceptions import BadHorizon, InsufficientData, SingularDesign


def rank_one_flat(n_days, t=24, k=1, seed=0):
    """Flat sequence of rank-one daily curves; the incomplete day's level is
    pinned to the target-panel mean so the no-intercept regression is exact."""
    rng = np.random.default_rng(seed)
    phi = np.sin(2 * np.pi * np.arange(1, t + 1) / t) + 0.3
    levels = 1.0 + 0.5 * np.sin(0.7 * np.arange(n_days + 1)) + 0.05 * rng.standard_normal(n_days + 1)
    levels[n_days] = levels[1:n_days].mean()
    flat = np.concatenate([lv * phi for lv in levels])
    cut = n_days * t + (t - k)
    return flat[:cut], flat[cut: cut + k], phi, levels


class TestBuildShiftedPanels:
    def test_overlap_counts(self):
        r = np.arange(24.0 * 12 + 23)
        pair = cc.build_shifted_panels(r, 24, 1, 10)
        assert pair.overlap == 23
        pair = cc.build_shifted_panels(r, 24, 12, 10)
        assert pair.overlap == 12

    def test_bad_horizon(self):
        r = np.arange(24.0 * 12)
        with pytest.raises(BadHorizon):
            cc.build_shifted_panels(r, 24, 24, 5)
        with pytest.raises(BadHorizon):
            cc.build_shifted_panels(r, 24, 0, 5)

    def test_insufficient_data(self):
        with pytest.raises(InsufficientData):
            cc.build_shifted_panels(np.arange(100.0), 24, 1, 10)

    def test_shapes_and_day_counts(self):
        r = np.arange(24.0 * 9 + 23)
        pair = cc.build_shifted_panels(r, 24, 1, 8)
        assert pair.aux_values.shape == (8, 24)
        assert pair.target_values.shape == (7, 24)
        assert pair.n_days == pair.target_values.shape[0] + 1

    def test_overlap_bookkeeping_exact(self, rng):
        r = rng.standard_normal(24 * 15 + 20)
        for k in (1, 5, 23):
            pair = cc.build_shifted_panels(r, 24, k, 12)
            for i in range(pair.target_raw.shape[0]):
                np.testing.assert_array_equal(pair.aux_raw[i, k:],
                                              pair.target_raw[i, : 24 - k])

    def test_panels_demeaned_with_own_means(self, rng):
        r = rng.standard_normal(24 * 10 + 3)
        pair = cc.build_shifted_panels(r, 24, 3, 9)
        assert np.abs(pair.aux_values.mean(axis=0)).max() < 1e-12
        assert np.abs(pair.target_values.mean(axis=0)).max() < 1e-12
        np.testing.assert_allclose(pair.aux_values + pair.aux_mean, pair.aux_raw, atol=1e-12)


class TestCrossRegression:
    def test_identity_when_targets_equal_inputs(self, rng):
        alpha = rng.standard_normal((200, 4))
        fit = cc.fit_cross_regression(alpha, alpha.copy(), "ols")
        np.testing.assert_allclose(fit.coefs_, np.eye(4), atol=1e-10)
        np.testing.assert_allclose(fit.r2_, 1.0, atol=1e-12)

    def test_ridge_shrinks_to_zero(self, rng):
        alpha = rng.standard_normal((100, 3))
        beta = rng.standard_normal((100, 3))
        fit = cc.fit_cross_regression(alpha, beta, "ridge", penalty=1e9)
        assert np.abs(fit.coefs_).max() < 1e-4

    def test_ridge_zero_penalty_equals_ols(self, rng):
        alpha = rng.standard_normal((80, 5))
        beta = alpha @ rng.standard_normal((5, 5)) + 0.1 * rng.standard_normal((80, 5))
        ols = cc.fit_cross_regression(alpha, beta, "ols")
        ridge = cc.fit_cross_regression(alpha, beta, "ridge", penalty=0.0)
        np.testing.assert_allclose(ridge.coefs_, ols.coefs_, atol=1e-8)

    def test_lasso_zero_penalty_equals_ols(self, rng):
        alpha = rng.standard_normal((80, 4))
        beta = alpha @ rng.standard_normal((4, 4)) + 0.1 * rng.standard_normal((80, 4))
        ols = cc.fit_cross_regression(alpha, beta, "ols")
        lasso = cc.fit_cross_regression(alpha, beta, "lasso", penalty=0.0)
        np.testing.assert_allclose(lasso.coefs_, ols.coefs_, atol=1e-6)

    def test_lasso_support_recovery(self):
        rng = np.random.default_rng(123)
        n, p = 1000, 6
        alpha = rng.standard_normal((n, p))
        true = np.zeros((p, 1))
        true[2, 0] = 1.5
        beta = alpha @ true + 0.3 * rng.standard_normal((n, 1))
        fit = cc.fit_cross_regression(alpha, beta, "lasso", penalty=0.05)
        assert abs(fit.coefs_[2, 0] - 1.5) < 0.2
        others = np.delete(fit.coefs_[:, 0], 2)
        assert np.abs(others).max() < 0.05

    def test_singular_design_ols_only(self, rng):
        col = rng.standard_normal(50)
        alpha = np.column_stack([col, col])
        beta = rng.standard_normal((50, 2))
        with pytest.raises(SingularDesign):
            cc.fit_cross_regression(alpha, beta, "ols")
        fit = cc.fit_cross_regression(alpha, beta, "ridge", penalty=1e-2)
        assert np.all(np.isfinite(fit.coefs_))

    def test_get_params(self):
        est = cc.CrossScoreRegression("ridge", 0.5)
        assert est.get_params() == {"estimator": "ridge", "penalty": 0.5}


class TestRollingForecast:
    def test_rank_one_exactness(self):
        flat, realized, _, _ = rank_one_flat(60, k=1)
        pair = cc.build_shifted_panels(flat, 24, 1, 60)
        res = cc.rolling_forecast(pair, delta=0.999)
        assert np.abs(res.forecast_tail - realized).max() < 1e-6
        assert res.regression.r2_[0] > 1.0 - 1e-10

    def test_rank_one_exactness_longer_horizon(self):
        flat, realized, _, _ = rank_one_flat(60, k=6, seed=1)
        pair = cc.build_shifted_panels(flat, 24, 6, 60)
        res = cc.rolling_forecast(pair, delta=0.999)
        assert np.abs(res.forecast_tail - realized).max() < 1e-6
        assert res.forecast_tail.size == 6
        assert res.full_curve.size == 24

    def test_white_noise_has_no_genuine_predictability(self):
        # with maximal horizon the panels share a single point, so the
        # regression explains nothing and the tail forecast hugs the mean
        rng = np.random.default_rng(5)
        flat = rng.standard_normal(24 * 201 + 1)
        pair = cc.build_shifted_panels(flat, 24, 23, 200)
        res = cc.rolling_forecast(pair, delta=0.85, estimator="ridge", penalty=1e-2)
        assert res.extras["mean_r2"] < 0.25
        rms_dev = np.sqrt(np.mean((res.forecast_tail - pair.target_mean[1:]) ** 2))
        assert rms_dev < 0.75  # well under the unit noise scale

    def test_infinite_penalty_recovers_the_mean_forecast(self):
        rng = np.random.default_rng(6)
        flat = rng.standard_normal(24 * 101 + 23)
        pair = cc.build_shifted_panels(flat, 24, 1, 100)
        res = cc.rolling_forecast(pair, delta=0.85, estimator="lasso", penalty=1e6)
        np.testing.assert_allclose(res.full_curve, pair.target_mean, atol=1e-10)

    def test_step7_consistency_with_fitted_curves(self, rng):
        # replacing the predicted scores by the true ones reproduces the
        # target panel's own fitted curves
        flat = rng.standard_normal(24 * 61 + 23)
        pair = cc.build_shifted_panels(flat, 24, 1, 60)
        basis = cc.FunctionalPCA(delta=0.85).fit(pair.target_values)
        j = basis.n_components_
        for i in (0, 10, 58):
            rebuilt = pair.target_mean + basis.scores_[i, :j] @ basis.eigenfunctions_[:j]
            fitted = basis.reconstruct(i, j) - basis.mean_curve_ + pair.target_mean
            np.testing.assert_allclose(rebuilt, fitted, atol=1e-10)


class TestHorizonDiagnostic:
    @staticmethod
    def ar_flat(seed, n_days=120, t=24, a=0.3):
        rng = np.random.default_rng(seed)
        n = n_days * t + 60
        x = np.empty(n)
        x[0] = 0.0
        e = rng.standard_normal(n)
        for i in range(1, n):
            x[i] = a * x[i - 1] + e[i]
        return x[-n_days * t:]

    def test_r2_decays_with_horizon(self):
        r2 = {1: [], 8: [], 23: []}
        for seed in range(5):
            rows = cc.horizon_diagnostic(self.ar_flat(seed), 24, [1, 8, 23],
                                         estimator="ridge", penalty=1e-2)
            for row in rows:
                r2[row["k"]].append(row["mean_r2"])
        means = {k: np.mean(v) for k, v in r2.items()}
        assert means[1] > means[8] > means[23]
        assert means[1] > 0.85

    def test_white_noise_r2_tracks_overlap_fraction(self):
        # independent returns make the score regression purely mechanical: its
        # R-squared follows the shared-point fraction (T - k) / T plus an
        # in-sample overfitting surplus of roughly J / N
        rng = np.random.default_rng(9)
        flat = rng.standard_normal(24 * 100)
        rows = cc.horizon_diagnostic(flat, 24, [1, 12, 23], estimator="ridge",
                                     penalty=1e-2)
        r2 = [row["mean_r2"] for row in rows]
        assert r2[0] > r2[1] > r2[2]
        assert r2[0] == pytest.approx(23 / 24, abs=0.08)
        assert r2[1] == pytest.approx(12 / 24, abs=0.12)
        assert r2[2] < 0.25


class TestOriginBacktest:
    def test_rows_and_metrics(self):
        rng = np.random.default_rng(14)
        flat = rng.standard_normal(24 * 40)
        out = cc.rolling_origin_backtest(flat, 24, 1, window_days=20, n_forecasts=30)
        assert len(out["rows"]) == 30
        origins = [row["origin"] for row in out["rows"]]
        assert origins == list(range(flat.size - 30, flat.size))
        for row in out["rows"]:
            assert row["sign_hit"] in (0, 1)
            assert row["realized"] == flat[row["origin"] + 1 - 1]
        assert out["rmse"] > 0

    def test_insufficient_history(self):
        with pytest.raises(InsufficientData):
            cc.rolling_origin_backtest(np.random.default_rng(0).standard_normal(500),
                                       24, 1, window_days=30, n_forecasts=10)

    def test_window_search_picks_best_sign_rate(self):
        flat, _, _, _ = rank_one_flat(46, k=1, seed=3)
        full = np.concatenate([flat, np.zeros(0)])
        search = cc.rolling_window_search(full, 24, 1, [12, 16], n_forecasts=10)
        assert len(search["summaries"]) == 2
        best = search["best"]
        assert best["sign_rate"] == max(s["sign_rate"] for s in search["summaries"])
