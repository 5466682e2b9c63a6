"""
Trading calendar, price, return and factor series
"""
import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional, Union

import numpy as np
import pandas as pd

from config.taxonomy import FACTOR_COLUMNS, RISK_FREE_COLUMN
from src.errors import CalendarExhaustedError, DataValidationError, InsufficientDataError

logger = logging.getLogger(__name__)

RETURN_METHODS = ("simple", "log")


def _check_index(index: pd.Index, what: str):
    if not index.is_unique:
        raise DataValidationError(f"{what}: duplicate dates")
    if not index.is_monotonic_increasing:
        raise DataValidationError(f"{what}: dates are not strictly increasing")


@dataclass(frozen=True)
class TradingCalendar:
    dates: pd.DatetimeIndex

    def __post_init__(self):
        _check_index(self.dates, "trading calendar")

    @classmethod
    def from_dates(cls, dates: Iterable) -> "TradingCalendar":
        return cls(pd.DatetimeIndex(pd.to_datetime(list(dates))))

    def __len__(self) -> int:
        return len(self.dates)

    def __contains__(self, date) -> bool:
        return pd.Timestamp(date) in self.dates

    def position(self, date) -> int:
        return int(self.dates.get_loc(pd.Timestamp(date)))

    def next_after(self, date) -> pd.Timestamp:
        """First trading date strictly after `date`"""
        pos = int(self.dates.searchsorted(pd.Timestamp(date), side="right"))
        if pos >= len(self.dates):
            raise CalendarExhaustedError(f"no trading date after {pd.Timestamp(date).date()}")
        return self.dates[pos]


@dataclass(frozen=True)
class PriceSeries:
    instrument_id: str
    closes: pd.Series

    def __post_init__(self):
        _check_index(self.closes.index, f"prices for {self.instrument_id}")
        if (self.closes <= 0).any() or self.closes.isna().any():
            raise DataValidationError(f"prices for {self.instrument_id}: non-positive or missing close")

    def __len__(self) -> int:
        return len(self.closes)


@dataclass(frozen=True)
class ReturnSeries:
    instrument_id: str
    returns: pd.Series
    # trading days skipped because no price was observed
    gaps: int = 0

    def __post_init__(self):
        _check_index(self.returns.index, f"returns for {self.instrument_id}")

    def __len__(self) -> int:
        return len(self.returns)

    @property
    def dates(self) -> pd.DatetimeIndex:
        return self.returns.index

    def between(self, start, end) -> "ReturnSeries":
        return ReturnSeries(self.instrument_id, self.returns.loc[start:end], self.gaps)


@dataclass(frozen=True)
class FactorSeries:
    frame: pd.DataFrame = field(repr=False)

    def __post_init__(self):
        _check_index(self.frame.index, "factors")
        missing = [c for c in (*FACTOR_COLUMNS, RISK_FREE_COLUMN) if c not in self.frame.columns]
        if missing:
            raise DataValidationError(f"factors: missing columns {missing}")
        if self.frame[list(FACTOR_COLUMNS) + [RISK_FREE_COLUMN]].isna().any().any():
            raise DataValidationError("factors: every row needs all five factors and rf")

    def __len__(self) -> int:
        return len(self.frame)

    @property
    def dates(self) -> pd.DatetimeIndex:
        return self.frame.index


def compute_returns(prices: PriceSeries, method: str = "log",
                    calendar: Optional[TradingCalendar] = None) -> ReturnSeries:
    """
    Daily returns dated at the later of each consecutive pair of prices.

    A trading day without a price is skipped, so the next return spans the gap;
    the number of skipped calendar days is kept on the result.
    """
    if method not in RETURN_METHODS:
        raise ValueError(f"unknown return method {method!r}")
    closes = prices.closes
    if len(closes) < 2:
        raise InsufficientDataError(f"{prices.instrument_id}: need at least 2 prices, got {len(closes)}")
    if (closes <= 0).any():
        raise DataValidationError(f"{prices.instrument_id}: non-positive price")

    gaps = 0
    if calendar is not None:
        outside = closes.index.difference(calendar.dates)
        if len(outside):
            raise DataValidationError(
                f"{prices.instrument_id}: {len(outside)} price dates are not trading days "
                f"(first {outside[0].date()})"
            )
        positions = calendar.dates.get_indexer(closes.index)
        gaps = int(np.sum(np.diff(positions) - 1))
        if gaps:
            logger.info("%s: %d trading days without a price", prices.instrument_id, gaps)

    values = closes.to_numpy(dtype=float)
    ratio = values[1:] / values[:-1]
    if method == "log":
        data = np.log(ratio)
    else:
        data = ratio - 1.0
    returns = pd.Series(data, index=closes.index[1:], name=prices.instrument_id)
    return ReturnSeries(prices.instrument_id, returns, gaps)


def align(series_a: ReturnSeries, series_b: Union[ReturnSeries, FactorSeries]) -> pd.DataFrame:
    """
    Pair observations on the dates both inputs share.

    The result has column "a" for series_a and either "b" (return series) or
    the factor columns plus rf (factor series).
    """
    if len(series_a) == 0 or len(series_b) == 0:
        raise InsufficientDataError("cannot align an empty series")
    if isinstance(series_b, FactorSeries):
        right = series_b.frame[list(FACTOR_COLUMNS) + [RISK_FREE_COLUMN]]
    else:
        right = series_b.returns.rename("b").to_frame()
    left = series_a.returns.rename("a").to_frame()
    paired = left.join(right, how="inner")
    if paired.empty:
        raise InsufficientDataError(
            f"{series_a.instrument_id}: no dates in common with the series it is aligned to"
        )
    return paired


def excess_returns(returns: ReturnSeries, factors: FactorSeries) -> ReturnSeries:
    paired = align(returns, factors)
    excess = (paired["a"] - paired[RISK_FREE_COLUMN]).rename(returns.instrument_id)
    return ReturnSeries(returns.instrument_id, excess, returns.gaps)


def calendar_from_index(index_prices: PriceSeries) -> TradingCalendar:
    """Calendar taken from the dates on which the market index has a close"""
    return TradingCalendar(pd.DatetimeIndex(index_prices.closes.index))
