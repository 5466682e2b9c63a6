import math

import numpy as np
import pandas as pd
import pytest

from src.errors import CalendarExhaustedError, InsufficientDataError
from src.event_study import (
    AbnormalReturnSeries,
    CARValue,
    EventSpec,
    EventStudyInputs,
    EventStudySettings,
    compare_normal_models,
    compute_ar,
    compute_caar,
    compute_car,
    make_event,
    resolve_event_date,
    run_event_study,
)
from src.expected_return import ConstantMeanModel, MarketModel
from src.market_data import TradingCalendar

from conftest import make_returns

EVENT = EventSpec("AAA", pd.Timestamp("2021-03-01"), pd.Timestamp("2021-03-02"))


def ar_series(values):
    w = len(values) // 2
    dates = pd.bdate_range("2021-03-01", periods=len(values))
    return AbnormalReturnSeries(EVENT, w, pd.Series(values, index=range(-w, w + 1), dtype=float), dates)


class TestResolveEventDate:
    def test_wednesday_to_thursday(self, weekday_calendar):
        assert resolve_event_date(pd.Timestamp("2021-01-06"), weekday_calendar) == pd.Timestamp("2021-01-07")

    def test_friday_to_monday(self, weekday_calendar):
        assert resolve_event_date(pd.Timestamp("2021-01-08"), weekday_calendar) == pd.Timestamp("2021-01-11")

    def test_last_date(self, weekday_calendar):
        with pytest.raises(CalendarExhaustedError):
            resolve_event_date(weekday_calendar.dates[-1], weekday_calendar)

    def test_report_year_defaults_to_prior_year(self, weekday_calendar):
        assert make_event("AAA", "2021-01-06", weekday_calendar).report_year == 2020
        assert make_event("AAA", "2021-01-06", weekday_calendar, report_year=2018).report_year == 2018


class TestComputeAR:
    def setup_method(self):
        self.calendar = TradingCalendar(pd.bdate_range("2021-01-04", periods=40))
        self.event = EventSpec("AAA", self.calendar.dates[19], self.calendar.dates[20], windows=(3,))

    def test_matches_prediction(self):
        actual = make_returns("AAA", self.calendar.dates, np.full(40, 0.004))
        ar = compute_ar(self.event, 3, actual, ConstantMeanModel(0.004), self.calendar)
        assert list(ar.values) == [0.0] * 7

    def test_zero_mean(self):
        actual = make_returns("AAA", self.calendar.dates, np.full(40, 0.01))
        ar = compute_ar(self.event, 3, actual, ConstantMeanModel(0.0), self.calendar)
        assert list(ar.values.index) == [-3, -2, -1, 0, 1, 2, 3]
        assert list(ar.values) == pytest.approx([0.01] * 7)

    def test_market_tracking(self, rng):
        market = make_returns("M", self.calendar.dates, rng.normal(0, 0.01, 40))
        ar = compute_ar(self.event, 3, market, MarketModel(0.0, 1.0), self.calendar, market=market)
        assert np.all(ar.values.to_numpy() == 0.0)

    def test_shifted_actuals_shift_ar(self, rng):
        market = make_returns("M", self.calendar.dates, rng.normal(0, 0.01, 40))
        values = rng.normal(0, 0.02, 40)
        model = MarketModel(0.0004, 1.2)
        base = compute_ar(self.event, 3, make_returns("AAA", self.calendar.dates, values), model, self.calendar,
                          market=market)
        for c in (0.01, -0.003):
            shifted = compute_ar(self.event, 3, make_returns("AAA", self.calendar.dates, values + c), model,
                                 self.calendar, market=market)
            np.testing.assert_allclose(shifted.values - base.values, c, rtol=0, atol=1e-15)

    def test_missing_return_in_window(self):
        dates = self.calendar.dates.delete(21)
        actual = make_returns("AAA", dates, np.zeros(39))
        with pytest.raises(InsufficientDataError):
            compute_ar(self.event, 3, actual, ConstantMeanModel(0.0), self.calendar)


class TestCARAndCAAR:
    def test_car_sum(self):
        assert compute_car(ar_series([0.01, -0.005, 0.002])).car == pytest.approx(0.007)

    def test_car_zero(self):
        assert compute_car(ar_series([0.0] * 7)).car == 0.0

    def test_car_order_independent(self, rng):
        values = rng.normal(0, 0.02, 7)
        car = compute_car(ar_series(values)).car
        assert car == pytest.approx(math.fsum(values[::-1]), abs=1e-15)

    @pytest.mark.parametrize("cars,expected", [
        ([0.02, 0.02], 0.02),
        ([0.01, -0.01], 0.0),
        ([0.01, 0.02, 0.06], 0.03),
    ])
    def test_caar(self, cars, expected):
        values = [CARValue(EVENT, 1, c) for c in cars]
        assert compute_caar(values, 1).caar == pytest.approx(expected, abs=1e-15)

    def test_caar_order_independent(self, rng):
        cars = [CARValue(EVENT, 3, c) for c in rng.normal(0, 0.05, 25)]
        expected = compute_caar(cars, 3)
        for _ in range(5):
            shuffled = [cars[i] for i in rng.permutation(len(cars))]
            assert compute_caar(shuffled, 3) == expected

    def test_caar_mixed_windows(self):
        with pytest.raises(ValueError):
            compute_caar([CARValue(EVENT, 1, 0.0), CARValue(EVENT, 3, 0.0)], 1)

    def test_caar_empty(self):
        with pytest.raises(InsufficientDataError):
            compute_caar([], 1)


def hand_fixture():
    """Two firms, 60 trading days, one event each inside the last 30"""
    rng = np.random.default_rng(11)
    calendar = TradingCalendar(pd.bdate_range("2021-01-04", periods=60))
    market = rng.normal(0.0005, 0.01, 60)
    firm_a = 0.0002 + 0.9 * market + rng.normal(0, 0.004, 60)
    firm_b = rng.normal(0.001, 0.015, 60)
    returns = {"AAA": make_returns("AAA", calendar.dates, firm_a), "BBB": make_returns("BBB", calendar.dates, firm_b),
               "SET": make_returns("SET", calendar.dates, market)}
    # events land on positions 45 and 50
    events = [{"firm": "AAA", "submission_date": calendar.dates[44], "report_year": None},
              {"firm": "BBB", "submission_date": calendar.dates[49], "report_year": None}]
    inputs = EventStudyInputs(calendar=calendar, returns=returns, events=events, market=returns["SET"])
    return inputs, {"AAA": (firm_a, 45), "BBB": (firm_b, 50)}, market


def manual_cars(series, event_pos, market, model, w, widest=5, length=30):
    end = event_pos - widest - 1
    est = slice(end - length + 1, end + 1)
    if model == "constant_mean":
        normal = np.full(len(series), np.mean(series[est]))
    else:
        x, y = market[est], series[est]
        beta = np.sum((x - x.mean()) * (y - y.mean())) / np.sum((x - x.mean()) ** 2)
        alpha = y.mean() - beta * x.mean()
        normal = alpha + beta * market
    ar = series - normal
    return np.sum(ar[event_pos - w:event_pos + w + 1])


class TestRunEventStudy:
    @pytest.mark.parametrize("model", ["constant_mean", "market"])
    def test_matches_manual_computation(self, model):
        inputs, firms, market = hand_fixture()
        settings = EventStudySettings(model=model, estimation_length=30, min_observations=20)
        result = run_event_study(inputs, settings)
        assert not result.dropped
        for w in (1, 3, 5):
            expected = {firm: manual_cars(series, pos, market, model, w) for firm, (series, pos) in firms.items()}
            rows = result.cars[result.cars["window"] == w]
            for firm, car in zip(rows["firm"], rows["car"]):
                assert car == pytest.approx(expected[firm], abs=1e-12)
            caar = result.caars.set_index("window").loc[w, "caar"]
            assert caar == pytest.approx(np.mean(list(expected.values())), abs=1e-12)

    def test_window_nesting(self):
        inputs, _, _ = hand_fixture()
        result = run_event_study(inputs, EventStudySettings(model="constant_mean", estimation_length=30,
                                                            min_observations=20))
        widest = [ar for ar in result.abnormal_returns if ar.window == 5]
        for ar in widest:
            car1 = result.car_lookup(1)[ar.event.key]
            assert car1 == pytest.approx(ar.values.loc[-1:1].sum(), abs=1e-15)

    def test_zero_abnormal_returns(self):
        calendar = TradingCalendar(pd.bdate_range("2021-01-04", periods=60))
        returns = {"AAA": make_returns("AAA", calendar.dates, np.full(60, 0.002))}
        inputs = EventStudyInputs(calendar, returns, [{"firm": "AAA", "submission_date": calendar.dates[44]}])
        result = run_event_study(inputs, EventStudySettings(model="constant_mean", estimation_length=30,
                                                            min_observations=20))
        assert list(result.caars["caar"]) == pytest.approx([0.0, 0.0, 0.0], abs=1e-15)

    def test_empty_event_list(self, weekday_calendar):
        result = run_event_study(EventStudyInputs(weekday_calendar, {}, []), EventStudySettings(model="constant_mean"))
        assert result.cars.empty and result.caars.empty and not result.dropped

    def test_incomplete_window_drops_event_everywhere(self):
        inputs, _, _ = hand_fixture()
        inputs.events.append({"firm": "AAA", "submission_date": inputs.calendar.dates[56], "report_year": None})
        result = run_event_study(inputs, EventStudySettings(model="constant_mean", estimation_length=30,
                                                            min_observations=20))
        assert len(result.dropped) == 1
        assert set(result.caars["n_events"]) == {2}

    def test_unknown_firm_dropped_with_reason(self):
        inputs, _, _ = hand_fixture()
        inputs.events.append({"firm": "ZZZ", "submission_date": inputs.calendar.dates[40], "report_year": None})
        result = run_event_study(inputs, EventStudySettings(model="constant_mean", estimation_length=30,
                                                            min_observations=20))
        (dropped,) = result.dropped
        assert dropped.firm_id == "ZZZ" and "no price data" in dropped.reason

    def test_workers_do_not_change_output(self):
        inputs, _, _ = hand_fixture()
        serial = run_event_study(inputs, EventStudySettings(model="market", estimation_length=30,
                                                            min_observations=20))
        threaded = run_event_study(inputs, EventStudySettings(model="market", estimation_length=30,
                                                              min_observations=20, n_jobs=4))
        pd.testing.assert_frame_equal(serial.cars, threaded.cars)

    def test_overlapping_events_flagged(self):
        inputs, _, _ = hand_fixture()
        inputs.events.append({"firm": "AAA", "submission_date": inputs.calendar.dates[47], "report_year": None})
        result = run_event_study(inputs, EventStudySettings(model="constant_mean", estimation_length=30,
                                                            min_observations=20))
        flags = result.cars.groupby("firm")["overlap"].all()
        assert flags["AAA"] and not flags["BBB"]


class TestCompareNormalModels:
    def test_models_without_inputs_skipped(self):
        inputs, _, _ = hand_fixture()
        settings = EventStudySettings(model="constant_mean", estimation_length=30, min_observations=20)
        by_model, correlations = compare_normal_models(inputs, settings)
        assert set(by_model["model"]) == {"constant_mean", "market"}
        assert len(correlations) == 3
        assert set(correlations["n_events"]) == {2}
