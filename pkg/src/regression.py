"""
OLS and ridge regressions of CARs on sentiment features, with analytic and bootstrap inference
"""
import logging
import threading
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import partial
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from config.taxonomy import ESTIMATORS, REGRESSION_MODELS, Aspect, Industry
from src.errors import EventSentimentError, InsufficientDataError, RankDeficiencyError
from src.linalg import fit_linear_model, solve_least_squares
from src.sentiment_features import DocumentFeatureVector, build_design_matrix, choose_industry_baseline

logger = logging.getLogger(__name__)

Z_5_PERCENT = 1.96
Z_1_PERCENT = 2.576
MIN_QUIET_RESAMPLES = 100
REDRAW_FACTOR = 10
BLOCK_SIZE = 250


class SignificanceFlag(str, Enum):
    NONE = ""
    FIVE_PERCENT = "*"
    ONE_PERCENT = "**"
    DEGENERATE = "degenerate"


@dataclass(frozen=True)
class OLSFit:
    coefficients: np.ndarray
    standard_errors: np.ndarray
    t_stats: np.ndarray
    p_values: np.ndarray
    r_squared: float
    residuals: np.ndarray
    df_resid: int
    columns: Optional[List[str]] = None


@dataclass(frozen=True)
class RidgeFit:
    lam: float
    coefficients: np.ndarray
    # slopes on the standardised predictors, intercept excluded
    standardized_coefficients: np.ndarray
    r_squared: float
    bootstrap_se: Optional[np.ndarray] = None
    columns: Optional[List[str]] = None


@dataclass(frozen=True)
class BootstrapConfig:
    resamples: int = 10_000
    seed: int = 0
    n_jobs: int = 1
    # extra entropy so independent cells draw independent streams
    stream: Tuple[int, ...] = ()

    def __post_init__(self):
        if self.resamples < 1:
            raise ValueError("resamples must be at least 1")


@dataclass(frozen=True)
class BootstrapResult:
    standard_errors: np.ndarray
    draws: np.ndarray
    redraws: int
    ci_95: Tuple[np.ndarray, np.ndarray]
    ci_99: Tuple[np.ndarray, np.ndarray]


@dataclass(frozen=True)
class RegressionSettings:
    model_ids: Tuple[int, ...] = tuple(REGRESSION_MODELS)
    estimators: Tuple[str, ...] = ESTIMATORS
    ridge_lambda: float = 1.0
    bootstrap: BootstrapConfig = BootstrapConfig()
    industry_baseline: Optional[Industry] = None

    def __post_init__(self):
        if self.ridge_lambda < 0:
            raise ValueError("ridge lambda must be non-negative")
        unknown = [e for e in self.estimators if e not in ESTIMATORS]
        if unknown:
            raise ValueError(f"unknown estimators {unknown}")


@dataclass
class RegressionResults:
    coefficients: pd.DataFrame
    r_squared: pd.DataFrame
    failures: List[Dict] = field(default_factory=list)
    dropped_rows: Dict[str, int] = field(default_factory=dict)
    baseline: Optional[Industry] = None


def derive_seed(seed: int, *components: int) -> int:
    """Sub-seed for one component, independent of call order"""
    return int(np.random.SeedSequence([seed, *components]).generate_state(1)[0])


def _r_squared(y: np.ndarray, residuals: np.ndarray) -> float:
    centered = y - y.mean()
    sst = float(centered @ centered)
    if sst == 0.0:
        return 0.0
    return 1.0 - float(residuals @ residuals) / sst


def fit_ols(X: np.ndarray, y: np.ndarray, columns: Optional[List[str]] = None) -> OLSFit:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, k = X.shape
    if n <= k:
        raise InsufficientDataError(f"OLS needs more rows than columns ({n} rows, {k} columns)")
    with np.errstate(divide="ignore", invalid="ignore"):
        results = fit_linear_model(X, y)
        se = np.asarray(results.bse, dtype=float)
        t_stats = np.where(se > 0, results.tvalues, np.nan)
        p_values = np.where(se > 0, results.pvalues, np.nan)
    # statsmodels leaves R^2 undefined for a constant response
    r_squared = float(results.rsquared) if results.centered_tss > 0 else 0.0
    return OLSFit(np.asarray(results.params, dtype=float), se, t_stats, p_values, r_squared,
                  np.asarray(results.resid, dtype=float), int(results.df_resid), columns)


def _standardize(X: np.ndarray, intercept: bool):
    predictors = X[:, 1:] if intercept else X
    means = predictors.mean(axis=0)
    scales = predictors.std(axis=0)
    # constant predictors stay at zero after centring
    scales = np.where(scales > 0, scales, 1.0)
    return (predictors - means) / scales, means, scales


def fit_ridge(X: np.ndarray, y: np.ndarray, lam: float, intercept: bool = True,
              columns: Optional[List[str]] = None) -> RidgeFit:
    """
    Ridge on standardised predictors with an unpenalised intercept.

    Column 0 of X is the intercept when `intercept` is set. Coefficients are
    reported on the original scale.
    """
    if lam < 0:
        raise ValueError(f"ridge lambda must be non-negative, got {lam}")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    Z, means, scales = _standardize(X, intercept)
    y_mean = y.mean() if intercept else 0.0
    yc = y - y_mean
    k = Z.shape[1]
    if k == 0:
        coefficients = np.array([y_mean])
        return RidgeFit(lam, coefficients, np.zeros(0), _r_squared(y, y - y_mean), columns=columns)

    # (Z'Z + lam I) b = Z'y as an augmented least-squares problem
    augmented = np.vstack([Z, np.sqrt(lam) * np.eye(k)])
    target = np.concatenate([yc, np.zeros(k)])
    slopes_std = solve_least_squares(augmented, target).coefficients
    slopes = slopes_std / scales
    if intercept:
        coefficients = np.concatenate([[y_mean - slopes @ means], slopes])
    else:
        coefficients = slopes
    residuals = y - X @ coefficients
    return RidgeFit(lam, coefficients, slopes_std, _r_squared(y, residuals), columns=columns)


def ols_coefficients(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    return solve_least_squares(X, y).coefficients


def ridge_coefficients(X: np.ndarray, y: np.ndarray, lam: float) -> np.ndarray:
    return fit_ridge(X, y, lam).coefficients


class _RedrawBudget:
    """Rank-deficient redraws shared across bootstrap blocks"""

    def __init__(self, cap: int):
        self.cap = cap
        self.used = 0
        self._lock = threading.Lock()

    def spend(self, resample: int) -> None:
        with self._lock:
            self.used += 1
            if self.used > self.cap:
                raise InsufficientDataError(
                    f"resample {resample}: rank-deficient redraws exceed the cap of {self.cap}"
                )


def _bootstrap_block(X: np.ndarray, y: np.ndarray, fitter: Callable, seed: int, stream: Tuple[int, ...],
                     indices: range, budget: _RedrawBudget) -> np.ndarray:
    n = len(y)
    draws = np.empty((len(indices), X.shape[1]))
    for row, i in enumerate(indices):
        rng = np.random.default_rng([seed, *stream, i])
        while True:
            pick = rng.integers(0, n, size=n)
            try:
                draws[row] = fitter(X[pick], y[pick])
                break
            except (RankDeficiencyError, InsufficientDataError):
                budget.spend(i)
    return draws


def bootstrap_se(X: np.ndarray, y: np.ndarray, fitter: Callable[[np.ndarray, np.ndarray], np.ndarray],
                 config: BootstrapConfig = BootstrapConfig()) -> BootstrapResult:
    """
    Row-resampling bootstrap standard errors.

    Resample i draws its rows from a generator seeded by (seed, stream, i), so
    results do not depend on the number of workers. Rank-deficient resamples
    are redrawn, at most 10x the resample count in total.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if config.resamples < MIN_QUIET_RESAMPLES:
        warnings.warn(f"{config.resamples} bootstrap resamples give unreliable standard errors", UserWarning)
        logger.warning("Bootstrap with only %d resamples", config.resamples)

    budget = _RedrawBudget(REDRAW_FACTOR * config.resamples)
    blocks = [range(start, min(start + BLOCK_SIZE, config.resamples))
              for start in range(0, config.resamples, BLOCK_SIZE)]
    outputs = Parallel(n_jobs=config.n_jobs, prefer="threads")(
        delayed(_bootstrap_block)(X, y, fitter, config.seed, config.stream, block, budget) for block in blocks
    )
    draws = np.vstack(outputs)
    redraws = budget.used
    if redraws:
        logger.warning("Bootstrap redrew %d rank-deficient resamples", redraws)

    if config.resamples > 1:
        se = draws.std(axis=0, ddof=1)
    else:
        se = np.zeros(X.shape[1])
    ci_95 = (np.percentile(draws, 2.5, axis=0), np.percentile(draws, 97.5, axis=0))
    ci_99 = (np.percentile(draws, 0.5, axis=0), np.percentile(draws, 99.5, axis=0))
    return BootstrapResult(se, draws, redraws, ci_95, ci_99)


def significance_flags(coefficient: float, se: float) -> SignificanceFlag:
    """Two-sided normal-approximation test: |z| >= 1.96 -> *, >= 2.576 -> **"""
    if se < 0:
        raise ValueError("standard error must be non-negative")
    if se == 0:
        return SignificanceFlag.DEGENERATE if coefficient != 0 else SignificanceFlag.NONE
    z = abs(coefficient / se)
    if z >= Z_1_PERCENT:
        return SignificanceFlag.ONE_PERCENT
    if z >= Z_5_PERCENT:
        return SignificanceFlag.FIVE_PERCENT
    return SignificanceFlag.NONE


def p_value_flag(p_value: float) -> SignificanceFlag:
    if not np.isfinite(p_value):
        return SignificanceFlag.DEGENERATE
    if p_value < 0.01:
        return SignificanceFlag.ONE_PERCENT
    if p_value < 0.05:
        return SignificanceFlag.FIVE_PERCENT
    return SignificanceFlag.NONE


def percentile_flag(ci_95: Tuple[float, float], ci_99: Tuple[float, float]) -> SignificanceFlag:
    """Flag from whether the percentile intervals exclude zero"""
    if ci_99[0] > 0 or ci_99[1] < 0:
        return SignificanceFlag.ONE_PERCENT
    if ci_95[0] > 0 or ci_95[1] < 0:
        return SignificanceFlag.FIVE_PERCENT
    return SignificanceFlag.NONE


def _coefficient_rows(model_id: int, window: int, estimator: str, columns: Sequence[str],
                      coefficients: np.ndarray, se: np.ndarray, flags: Sequence[SignificanceFlag],
                      ci_low=None, ci_high=None, pct_flags=None) -> List[Dict]:
    rows = []
    for j, term in enumerate(columns):
        rows.append({
            "model": model_id,
            "term": term,
            "window": window,
            "estimator": estimator,
            "coefficient": float(coefficients[j]),
            "std_error": float(se[j]),
            "flag": flags[j].value,
            "ci_low": float(ci_low[j]) if ci_low is not None else np.nan,
            "ci_high": float(ci_high[j]) if ci_high is not None else np.nan,
            "pct_flag": pct_flags[j].value if pct_flags is not None else "",
        })
    return rows


def run_models(features: Sequence[DocumentFeatureVector],
               cars: Mapping[int, Mapping[Tuple[str, pd.Timestamp], float]],
               windows: Sequence[int], settings: RegressionSettings = RegressionSettings()) -> RegressionResults:
    """
    Fit every (model, window, estimator) cell.

    `cars` maps each window to per-event CARs. OLS cells carry analytic
    t-test inference, ridge cells bootstrap z-tests plus percentile flags.
    A failing cell is recorded and the others proceed.
    """
    baseline = settings.industry_baseline
    if baseline is None and features:
        baseline = choose_industry_baseline(features)

    coefficient_rows: List[Dict] = []
    r2_rows: List[Dict] = []
    failures: List[Dict] = []
    dropped_rows: Dict[str, int] = {}

    for model_id in settings.model_ids:
        for window in sorted(windows):
            r2 = {"model": model_id, "window": window, "ols_r2": np.nan, "ridge_r2": np.nan}
            try:
                window_cars = cars.get(window, {})
                usable = [v for v in features if v.key in window_cars]
                design = build_design_matrix(model_id, usable, window_cars, baseline)
            except EventSentimentError as e:
                for estimator in settings.estimators:
                    failures.append({"model": model_id, "window": window, "estimator": estimator, "reason": str(e)})
                r2_rows.append(r2)
                continue
            dropped_rows[f"model{model_id}_w{window}"] = len(design.dropped)

            for estimator in settings.estimators:
                try:
                    if estimator == "ols":
                        fit = fit_ols(design.X, design.y, design.columns)
                        flags = [p_value_flag(p) for p in fit.p_values]
                        coefficient_rows += _coefficient_rows(model_id, window, "ols", design.columns,
                                                              fit.coefficients, fit.standard_errors, flags)
                        r2["ols_r2"] = fit.r_squared
                    else:
                        fit = fit_ridge(design.X, design.y, settings.ridge_lambda, columns=design.columns)
                        config = replace(settings.bootstrap, stream=(model_id, window))
                        boot = bootstrap_se(design.X, design.y,
                                            partial(ridge_coefficients, lam=settings.ridge_lambda), config)
                        flags = [significance_flags(c, s) for c, s in zip(fit.coefficients, boot.standard_errors)]
                        pct = [percentile_flag((boot.ci_95[0][j], boot.ci_95[1][j]),
                                               (boot.ci_99[0][j], boot.ci_99[1][j]))
                               for j in range(len(design.columns))]
                        coefficient_rows += _coefficient_rows(model_id, window, "ridge", design.columns,
                                                              fit.coefficients, boot.standard_errors, flags,
                                                              boot.ci_95[0], boot.ci_95[1], pct)
                        r2["ridge_r2"] = fit.r_squared
                except EventSentimentError as e:
                    logger.warning("Model %d window %d %s failed: %s", model_id, window, estimator, e)
                    failures.append({"model": model_id, "window": window, "estimator": estimator, "reason": str(e)})
            r2_rows.append(r2)

    coefficients = pd.DataFrame(coefficient_rows, columns=[
        "model", "term", "window", "estimator", "coefficient", "std_error", "flag", "ci_low", "ci_high", "pct_flag"])
    return RegressionResults(coefficients, pd.DataFrame(r2_rows, columns=["model", "window", "ols_r2", "ridge_r2"]),
                             failures, dropped_rows, baseline)


def rank_impacts(coefficients: pd.DataFrame, window: int, estimator: str = "ridge", model_id: int = 5,
                 top: int = 5) -> pd.DataFrame:
    """
    Largest positive and negative significant aspect-sentiment coefficients.

    Returns rows (rank, positive_impact, positive_coefficient, negative_impact,
    negative_coefficient); a side with fewer significant terms is left blank.
    """
    aspects = tuple(f"{a.value}." for a in Aspect)
    cell = coefficients[(coefficients["model"] == model_id) & (coefficients["window"] == window)
                        & (coefficients["estimator"] == estimator)
                        & coefficients["flag"].isin([SignificanceFlag.FIVE_PERCENT.value,
                                                     SignificanceFlag.ONE_PERCENT.value])]
    cell = cell[cell["term"].str.startswith(aspects)]
    positive = cell[cell["coefficient"] > 0].sort_values("coefficient", ascending=False, kind="mergesort").head(top)
    negative = cell[cell["coefficient"] < 0].sort_values("coefficient", ascending=True, kind="mergesort").head(top)
    rows = []
    for rank in range(top):
        pos = positive.iloc[rank] if rank < len(positive) else None
        neg = negative.iloc[rank] if rank < len(negative) else None
        rows.append({
            "rank": rank + 1,
            "positive_impact": pos["term"] if pos is not None else "",
            "positive_coefficient": pos["coefficient"] if pos is not None else np.nan,
            "negative_impact": neg["term"] if neg is not None else "",
            "negative_coefficient": neg["coefficient"] if neg is not None else np.nan,
        })
    return pd.DataFrame(rows)


def wide_table(coefficients: pd.DataFrame, model_id: int, estimator: str) -> pd.DataFrame:
    """Terms down the rows, (window, coefficient / std_error / flag) across the columns"""
    cell = coefficients[(coefficients["model"] == model_id) & (coefficients["estimator"] == estimator)]
    if cell.empty:
        return pd.DataFrame()
    order = list(dict.fromkeys(cell["term"]))
    table = cell.pivot(index="term", columns="window", values=["coefficient", "std_error", "flag"])
    table = table.swaplevel(0, 1, axis=1).sort_index(axis=1, level=0, sort_remaining=False)
    return table.reindex(order)
