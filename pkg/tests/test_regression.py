import time
from functools import partial

import numpy as np
import pandas as pd
import pytest
import statsmodels.api as sm

from config.taxonomy import Industry
from src.errors import InsufficientDataError, RankDeficiencyError
from src.regression import (
    BootstrapConfig,
    RegressionSettings,
    SignificanceFlag,
    bootstrap_se,
    derive_seed,
    fit_ols,
    fit_ridge,
    ols_coefficients,
    p_value_flag,
    rank_impacts,
    ridge_coefficients,
    run_models,
    significance_flags,
    wide_table,
)
from src.synthetic import PLANTED_TERM, planted_signal_dataset


def with_intercept(X):
    return np.column_stack([np.ones(len(X)), X])


class TestFitOLS:
    def test_exact_line(self):
        x = np.arange(10.0)
        fit = fit_ols(with_intercept(x), 1 + 2 * x)
        assert fit.coefficients == pytest.approx([1.0, 2.0])
        assert fit.r_squared == pytest.approx(1.0)

    def test_constant_response(self):
        x = np.arange(10.0)
        fit = fit_ols(with_intercept(x), np.full(10, 3.0))
        assert fit.coefficients == pytest.approx([3.0, 0.0], abs=1e-12)
        assert fit.r_squared == 0.0

    def test_normal_equation_oracle(self, rng):
        """100 random instances agree with (X'X)^-1 X'y; the whole batch runs in well under 5 s"""
        started = time.perf_counter()
        for _ in range(100):
            n = int(rng.integers(20, 201))
            k = int(rng.integers(2, 11))
            X = with_intercept(rng.normal(size=(n, k - 1)))
            y = rng.normal(size=n)
            oracle = np.linalg.solve(X.T @ X, X.T @ y)
            np.testing.assert_allclose(fit_ols(X, y).coefficients, oracle, rtol=1e-10, atol=1e-12)
        assert time.perf_counter() - started < 5.0

    def test_r_squared_nested(self, rng):
        for _ in range(20):
            X = with_intercept(rng.normal(size=(60, 4)))
            y = rng.normal(size=60)
            assert fit_ols(X, y).r_squared >= fit_ols(X[:, :4], y).r_squared - 1e-12

    def test_standard_errors_match_textbook(self, rng):
        X = with_intercept(rng.normal(size=(50, 3)))
        y = X @ np.array([0.5, 1.0, -1.0, 0.0]) + rng.normal(size=50)
        fit = fit_ols(X, y)
        sigma2 = fit.residuals @ fit.residuals / (50 - 4)
        expected = np.sqrt(np.diag(np.linalg.inv(X.T @ X)) * sigma2)
        np.testing.assert_allclose(fit.standard_errors, expected, rtol=1e-9)

    def test_too_few_rows(self):
        with pytest.raises(InsufficientDataError):
            fit_ols(np.ones((3, 3)), np.ones(3))

    def test_matches_statsmodels(self, rng):
        X = with_intercept(rng.normal(size=(50, 3)))
        y = X @ np.array([0.2, -0.5, 1.5, 0.0]) + rng.normal(size=50)
        fit = fit_ols(X, y)
        reference = sm.OLS(y, X).fit()
        np.testing.assert_allclose(fit.coefficients, reference.params, rtol=1e-10)
        np.testing.assert_allclose(fit.standard_errors, reference.bse, rtol=1e-10)
        np.testing.assert_allclose(fit.t_stats, reference.tvalues, rtol=1e-10)
        np.testing.assert_allclose(fit.p_values, reference.pvalues, rtol=1e-8)
        assert fit.r_squared == pytest.approx(reference.rsquared, rel=1e-12)
        assert fit.df_resid == 46

    def test_collinear_design_rejected(self):
        x = np.arange(20.0)
        with pytest.raises(RankDeficiencyError):
            fit_ols(np.column_stack([np.ones(20), x, 3 * x]), x + 1)


class TestFitRidge:
    def test_zero_penalty_is_ols(self, rng):
        X = with_intercept(rng.normal(size=(40, 3)))
        y = rng.normal(size=40)
        np.testing.assert_allclose(fit_ridge(X, y, 0.0).coefficients, fit_ols(X, y).coefficients, rtol=1e-8, atol=1e-10)

    def test_huge_penalty(self, rng):
        X = with_intercept(rng.normal(size=(40, 3)))
        y = rng.normal(size=40)
        fit = fit_ridge(X, y, 1e12)
        assert np.abs(fit.coefficients[1:]).max() < 1e-8
        assert fit.coefficients[0] == pytest.approx(y.mean(), abs=1e-8)

    def test_closed_form_on_standardized_data(self, rng):
        predictors = rng.normal(size=(20, 3)) * [1.0, 5.0, 0.2]
        y = rng.normal(size=20)
        fit = fit_ridge(with_intercept(predictors), y, 1.0)
        Z = (predictors - predictors.mean(axis=0)) / predictors.std(axis=0)
        oracle = np.linalg.solve(Z.T @ Z + np.eye(3), Z.T @ (y - y.mean()))
        np.testing.assert_allclose(fit.standardized_coefficients, oracle, rtol=1e-10)

    def test_norm_shrinks_with_penalty(self, rng):
        for _ in range(20):
            X = with_intercept(rng.normal(size=(50, 5)))
            y = rng.normal(size=50)
            norms = [np.linalg.norm(fit_ridge(X, y, lam).standardized_coefficients) for lam in (0, 0.1, 1, 10, 100)]
            assert all(b <= a + 1e-12 for a, b in zip(norms, norms[1:]))

    def test_negative_penalty(self):
        with pytest.raises(ValueError):
            fit_ridge(np.ones((5, 1)), np.ones(5), -1.0)


class TestBootstrap:
    def test_constant_response_has_zero_se(self):
        X = np.column_stack([np.ones(30), np.full(30, 2.0)])
        result = bootstrap_se(X, np.full(30, 0.5), partial(ridge_coefficients, lam=1.0),
                              BootstrapConfig(resamples=200, seed=1))
        assert result.standard_errors[0] == 0.0

    def test_same_seed_identical(self, rng):
        X = with_intercept(rng.normal(size=(60, 2)))
        y = rng.normal(size=60)
        config = BootstrapConfig(resamples=300, seed=42)
        first = bootstrap_se(X, y, ols_coefficients, config)
        second = bootstrap_se(X, y, ols_coefficients, config)
        assert first.standard_errors.tobytes() == second.standard_errors.tobytes()

    def test_workers_do_not_change_result(self, rng):
        X = with_intercept(rng.normal(size=(60, 2)))
        y = rng.normal(size=60)
        serial = bootstrap_se(X, y, ols_coefficients, BootstrapConfig(resamples=600, seed=9))
        threaded = bootstrap_se(X, y, ols_coefficients, BootstrapConfig(resamples=600, seed=9, n_jobs=3))
        assert serial.standard_errors.tobytes() == threaded.standard_errors.tobytes()

    def test_mean_calibration(self, rng):
        """Intercept-only model: SE within 5% of s/sqrt(n) at 10,000 resamples, under 30 s"""
        y = rng.normal(0.0, 1.0, 500)
        X = np.ones((500, 1))
        started = time.perf_counter()
        result = bootstrap_se(X, y, ols_coefficients, BootstrapConfig(resamples=10_000, seed=3))
        elapsed = time.perf_counter() - started
        analytic = y.std(ddof=1) / np.sqrt(500)
        assert result.standard_errors[0] == pytest.approx(analytic, rel=0.05)
        assert elapsed < 30.0

    def test_few_resamples_warn(self):
        with pytest.warns(UserWarning):
            bootstrap_se(np.ones((10, 1)), np.arange(10.0), ols_coefficients, BootstrapConfig(resamples=20))

    def test_single_resample(self):
        with pytest.warns(UserWarning):
            result = bootstrap_se(np.ones((10, 1)), np.arange(10.0), ols_coefficients, BootstrapConfig(resamples=1))
        assert result.standard_errors[0] == 0.0

    def test_rank_deficient_resamples_redrawn(self):
        # a dummy set on one row makes some resamples singular
        X = np.column_stack([np.ones(12), np.eye(12)[0]])
        y = np.arange(12.0)
        result = bootstrap_se(X, y, ols_coefficients, BootstrapConfig(resamples=200, seed=4))
        assert result.redraws > 0
        assert np.all(np.isfinite(result.standard_errors))

    def test_redraw_cap_stops_degenerate_design_early(self):
        calls = []

        def always_singular(X, y):
            calls.append(1)
            raise RankDeficiencyError("singular")

        config = BootstrapConfig(resamples=5, seed=0, n_jobs=1)
        with pytest.warns(UserWarning), pytest.raises(InsufficientDataError):
            bootstrap_se(np.ones((10, 1)), np.arange(10.0), always_singular, config)
        assert len(calls) == 10 * 5 + 1

    def test_derived_seeds_differ(self):
        assert derive_seed(0, 1) != derive_seed(0, 2)
        assert derive_seed(5, 1) == derive_seed(5, 1)


class TestSignificance:
    @pytest.mark.parametrize("coefficient,se,flag", [
        (2.0, 1.0, SignificanceFlag.FIVE_PERCENT),
        (3.0, 1.0, SignificanceFlag.ONE_PERCENT),
        (1.0, 1.0, SignificanceFlag.NONE),
        (-3.0, 1.0, SignificanceFlag.ONE_PERCENT),
    ])
    def test_z_thresholds(self, coefficient, se, flag):
        assert significance_flags(coefficient, se) == flag

    def test_zero_se(self):
        assert significance_flags(0.4, 0.0) == SignificanceFlag.DEGENERATE

    def test_p_value_flags(self):
        assert p_value_flag(0.001) == SignificanceFlag.ONE_PERCENT
        assert p_value_flag(0.03) == SignificanceFlag.FIVE_PERCENT
        assert p_value_flag(0.2) == SignificanceFlag.NONE
        assert p_value_flag(float("nan")) == SignificanceFlag.DEGENERATE


def window_cars(cars, windows=(3,)):
    return {w: cars for w in windows}


class TestRunModels:
    def test_result_shape(self):
        vectors, cars = planted_signal_dataset(seed=1, n=150)
        settings = RegressionSettings(bootstrap=BootstrapConfig(resamples=100, seed=2))
        results = run_models(vectors, window_cars(cars, (1, 3, 5)), (1, 3, 5), settings)
        assert not results.failures
        assert len(results.r_squared) == 15
        model5 = results.coefficients[(results.coefficients["model"] == 5)
                                      & (results.coefficients["window"] == 3)
                                      & (results.coefficients["estimator"] == "ridge")]
        assert model5["term"].str.contains(r"\.(negative|neutral|positive)$").sum() == 48

    def test_zero_noise_fit(self):
        vectors, cars = planted_signal_dataset(seed=3, n=120, sigma=0.0)
        results = run_models(vectors, window_cars(cars), (3,), RegressionSettings(model_ids=(5,), estimators=("ols",)))
        assert results.r_squared["ols_r2"].iloc[0] == pytest.approx(1.0)

    def test_zero_response(self):
        vectors, cars = planted_signal_dataset(seed=3, n=120)
        zeros = {k: 0.0 for k in cars}
        results = run_models(vectors, window_cars(zeros), (3,), RegressionSettings(model_ids=(1,), estimators=("ols",)))
        assert np.abs(results.coefficients["coefficient"]).max() < 1e-12
        assert results.r_squared["ols_r2"].iloc[0] == 0.0

    def test_failed_cell_recorded(self):
        vectors, cars = planted_signal_dataset(seed=3, n=40)
        results = run_models(vectors, window_cars(cars), (3,), RegressionSettings(model_ids=(1, 5),
                                                                                 estimators=("ols",)))
        assert [(f["model"], f["estimator"]) for f in results.failures] == [(5, "ols")]
        assert set(results.coefficients["model"]) == {1}

    def test_fixed_baseline(self):
        vectors, cars = planted_signal_dataset(seed=3, n=120)
        results = run_models(vectors, window_cars(cars), (3,),
                             RegressionSettings(model_ids=(1,), estimators=("ols",),
                                                industry_baseline=Industry.TECH))
        assert results.baseline == Industry.TECH
        assert "industry.TECH" not in set(results.coefficients["term"])

    def test_deterministic(self):
        vectors, cars = planted_signal_dataset(seed=8, n=120)
        settings = RegressionSettings(model_ids=(1, 3), bootstrap=BootstrapConfig(resamples=150, seed=5))
        first = run_models(vectors, window_cars(cars), (3,), settings)
        second = run_models(vectors, window_cars(cars), (3,), settings)
        pd.testing.assert_frame_equal(first.coefficients, second.coefficients)

    def test_planted_signal_recovered(self):
        """Only Profit/Loss x negative carries signal; it is flagged ** in at least 90 of 100 replications"""
        settings = RegressionSettings(model_ids=(5,), estimators=("ols",), industry_baseline=Industry.AGRO)
        strongest = 0
        flagged = 0
        for replication in range(100):
            vectors, cars = planted_signal_dataset(seed=replication, n=700)
            table = run_models(vectors, window_cars(cars), (3,), settings).coefficients
            row = table[table["term"] == PLANTED_TERM].iloc[0]
            flagged += row["flag"] == SignificanceFlag.ONE_PERCENT.value
            aspect_terms = table[table["term"].str.contains(".", regex=False)
                                 & ~table["term"].str.startswith("industry.")]
            t_stats = (aspect_terms["coefficient"] / aspect_terms["std_error"]).abs()
            strongest += aspect_terms.loc[t_stats.idxmax(), "term"] == PLANTED_TERM
        assert flagged >= 90
        assert strongest >= 90


class TestTables:
    def setup_method(self):
        vectors, cars = planted_signal_dataset(seed=12, n=700)
        self.results = run_models(vectors, window_cars(cars, (1, 3)), (1, 3),
                                  RegressionSettings(model_ids=(5,), estimators=("ols",)))

    def test_rank_impacts_lists_planted_term_first(self):
        table = rank_impacts(self.results.coefficients, 3, estimator="ols")
        assert len(table) == 5
        assert table["negative_impact"].iloc[0] == PLANTED_TERM

    def test_wide_table(self):
        table = wide_table(self.results.coefficients, 5, "ols")
        assert table.shape == (61, 6)
        assert list(table.index[:2]) == ["const", "Brand.negative"]
