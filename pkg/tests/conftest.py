"""Shared fixtures: seeded generators, small calendars and a synthetic input set"""
import numpy as np
import pandas as pd
import pytest

from src.market_data import ReturnSeries, TradingCalendar
from src.synthetic import write_sample_inputs


@pytest.fixture
def rng():
    return np.random.default_rng(20240501)


@pytest.fixture
def weekday_calendar():
    return TradingCalendar(pd.bdate_range("2021-01-04", periods=80))


def make_returns(instrument, dates, values):
    return ReturnSeries(instrument, pd.Series(np.asarray(values, dtype=float), index=pd.DatetimeIndex(dates)))


@pytest.fixture(scope="session")
def sample_inputs(tmp_path_factory):
    """Synthetic input set shared by the end-to-end tests (never modified by them)"""
    return write_sample_inputs(str(tmp_path_factory.mktemp("sample")), seed=7)
