"""
Normal-return models fitted over a pre-event estimation window
"""
import logging
import math
from dataclasses import dataclass
from typing import ClassVar, Mapping, Optional, Tuple, Union

import numpy as np
import pandas as pd

from config.taxonomy import (
    DEFAULT_ESTIMATION_LENGTH,
    DEFAULT_MIN_OBSERVATIONS,
    FACTOR_COLUMNS,
    MIN_ESTIMATION_LENGTH,
    NORMAL_MODELS,
    RISK_FREE_COLUMN,
)
from src.errors import InsufficientDataError, RankDeficiencyError
from src.linalg import fit_linear_model
from src.market_data import FactorSeries, ReturnSeries, TradingCalendar, align, excess_returns

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EstimationWindow:
    end: pd.Timestamp
    length: int = DEFAULT_ESTIMATION_LENGTH
    min_observations: int = DEFAULT_MIN_OBSERVATIONS
    start: Optional[pd.Timestamp] = None

    def __post_init__(self):
        if self.length < MIN_ESTIMATION_LENGTH:
            raise ValueError(f"estimation window of {self.length} days is below the floor of {MIN_ESTIMATION_LENGTH}")
        if self.min_observations < 1:
            raise ValueError("min_observations must be positive")

    def select(self, frame: Union[pd.DataFrame, pd.Series]):
        if self.start is not None:
            return frame.loc[self.start:self.end]
        return frame.loc[:self.end].iloc[-self.length:]


def estimation_window_for(event_date, calendar: TradingCalendar, widest_window: int,
                          length: int = DEFAULT_ESTIMATION_LENGTH,
                          min_observations: int = DEFAULT_MIN_OBSERVATIONS) -> EstimationWindow:
    """
    Window of `length` trading days ending the trading day before the first
    day of the widest event window.
    """
    event_pos = calendar.position(event_date)
    end_pos = event_pos - widest_window - 1
    if end_pos < 0:
        raise InsufficientDataError(f"no trading days before the event window of {pd.Timestamp(event_date).date()}")
    start_pos = max(0, end_pos - length + 1)
    return EstimationWindow(end=calendar.dates[end_pos], length=length,
                            min_observations=min_observations, start=calendar.dates[start_pos])


@dataclass(frozen=True)
class ConstantMeanModel:
    mu: float
    n_obs: int = 0
    residual_std: float = 0.0
    kind: ClassVar[str] = "constant_mean"

    def __post_init__(self):
        if not math.isfinite(self.mu):
            raise ValueError("mu must be finite")

    def predict(self, market_return: Optional[float] = None,
                factors: Optional[Mapping[str, float]] = None) -> float:
        return self.mu


@dataclass(frozen=True)
class MarketModel:
    alpha: float
    beta: float
    n_obs: int = 0
    residual_std: float = 0.0
    kind: ClassVar[str] = "market"

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and math.isfinite(self.beta)):
            raise ValueError("alpha and beta must be finite")

    def predict(self, market_return: Optional[float] = None,
                factors: Optional[Mapping[str, float]] = None) -> float:
        if market_return is None or not math.isfinite(market_return):
            raise InsufficientDataError("market model needs the market return for the date")
        return self.alpha + self.beta * market_return


@dataclass(frozen=True)
class FamaFrenchModel:
    alpha: float
    loadings: Tuple[float, ...]
    n_obs: int = 0
    residual_std: float = 0.0
    kind: ClassVar[str] = "fama_french"

    def __post_init__(self):
        if len(self.loadings) != len(FACTOR_COLUMNS):
            raise ValueError(f"expected {len(FACTOR_COLUMNS)} loadings, got {len(self.loadings)}")
        if not all(math.isfinite(v) for v in (self.alpha, *self.loadings)):
            raise ValueError("coefficients must be finite")

    def predict(self, market_return: Optional[float] = None,
                factors: Optional[Mapping[str, float]] = None) -> float:
        if factors is None:
            raise InsufficientDataError("Fama-French model needs the factor row for the date")
        try:
            values = [float(factors[c]) for c in FACTOR_COLUMNS]
            rf = float(factors[RISK_FREE_COLUMN])
        except KeyError as e:
            raise InsufficientDataError(f"factor row is missing {e}")
        excess = self.alpha + sum(b * f for b, f in zip(self.loadings, values))
        return rf + excess


NormalModel = Union[ConstantMeanModel, MarketModel, FamaFrenchModel]


def predict_normal(model: NormalModel, market_return: Optional[float] = None,
                   factors: Optional[Mapping[str, float]] = None) -> float:
    return model.predict(market_return=market_return, factors=factors)


def _check_count(n: int, min_observations: int, what: str):
    if n < min_observations:
        raise InsufficientDataError(f"{what}: {n} observations, need at least {min_observations}")


def _residual_std(residuals: np.ndarray, n_params: int) -> float:
    dof = len(residuals) - n_params
    if dof <= 0:
        return 0.0
    return float(np.sqrt(residuals @ residuals / dof))


def fit_constant_mean(est: ReturnSeries, window: Optional[EstimationWindow] = None,
                      min_observations: int = DEFAULT_MIN_OBSERVATIONS) -> ConstantMeanModel:
    returns = est.returns if window is None else window.select(est.returns)
    floor = min_observations if window is None else window.min_observations
    _check_count(len(returns), floor, est.instrument_id)
    values = returns.to_numpy(dtype=float)
    mu = math.fsum(values) / len(values)
    return ConstantMeanModel(mu=mu, n_obs=len(values), residual_std=_residual_std(values - mu, 1))


def fit_market_model(stock: ReturnSeries, market: ReturnSeries, window: Optional[EstimationWindow] = None,
                     min_observations: int = DEFAULT_MIN_OBSERVATIONS) -> MarketModel:
    paired = align(stock, market)
    if window is not None:
        paired = window.select(paired)
        min_observations = window.min_observations
    _check_count(len(paired), min_observations, stock.instrument_id)
    x = paired["b"].to_numpy(dtype=float)
    if np.all(x == x[0]):
        raise RankDeficiencyError(f"{stock.instrument_id}: market returns have zero variance")
    X = np.column_stack([np.ones(len(x)), x])
    results = fit_linear_model(X, paired["a"].to_numpy(dtype=float))
    alpha, beta = results.params
    return MarketModel(alpha=float(alpha), beta=float(beta), n_obs=len(paired),
                       residual_std=_residual_std(results.resid, 2))


def fit_fama_french(stock_excess: ReturnSeries, factors: FactorSeries, window: Optional[EstimationWindow] = None,
                    min_observations: int = DEFAULT_MIN_OBSERVATIONS) -> FamaFrenchModel:
    """OLS of excess stock returns on the five factors with an intercept"""
    paired = align(stock_excess, factors)
    if window is not None:
        paired = window.select(paired)
        min_observations = window.min_observations
    _check_count(len(paired), min_observations, stock_excess.instrument_id)
    X = np.column_stack([np.ones(len(paired)), paired[list(FACTOR_COLUMNS)].to_numpy(dtype=float)])
    results = fit_linear_model(X, paired["a"].to_numpy(dtype=float))
    coefficients = results.params
    return FamaFrenchModel(alpha=float(coefficients[0]), loadings=tuple(float(b) for b in coefficients[1:]),
                           n_obs=len(paired), residual_std=_residual_std(results.resid, X.shape[1]))


def fit_normal_model(kind: str, stock: ReturnSeries, window: Optional[EstimationWindow] = None,
                     market: Optional[ReturnSeries] = None,
                     factors: Optional[FactorSeries] = None) -> NormalModel:
    if kind not in NORMAL_MODELS:
        raise ValueError(f"unknown normal-return model {kind!r}")
    if kind == "constant_mean":
        return fit_constant_mean(stock, window)
    if kind == "market":
        if market is None:
            raise InsufficientDataError("market model needs market index returns")
        return fit_market_model(stock, market, window)
    if factors is None:
        raise InsufficientDataError("Fama-French model needs factor data")
    return fit_fama_french(excess_returns(stock, factors), factors, window)


def predict_series(model: NormalModel, dates: pd.DatetimeIndex, market: Optional[ReturnSeries] = None,
                   factors: Optional[FactorSeries] = None) -> pd.Series:
    """Normal returns for each date; raises when a date lacks the model's inputs"""
    predictions = []
    for date in dates:
        market_return = None
        factor_row = None
        if model.kind == "market":
            if market is None or date not in market.returns.index:
                raise InsufficientDataError(f"no market return on {date.date()}")
            market_return = float(market.returns.loc[date])
        elif model.kind == "fama_french":
            if factors is None or date not in factors.frame.index:
                raise InsufficientDataError(f"no factor row on {date.date()}")
            factor_row = factors.frame.loc[date]
        predictions.append(model.predict(market_return=market_return, factors=factor_row))
    return pd.Series(predictions, index=dates, dtype=float)
