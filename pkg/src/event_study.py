"""
Event resolution, abnormal returns, CAR per event and CAAR across events
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from config.taxonomy import (
    DEFAULT_ESTIMATION_LENGTH,
    DEFAULT_MIN_OBSERVATIONS,
    DEFAULT_WINDOWS,
    NORMAL_MODELS,
)
from src.errors import EventSentimentError, InsufficientDataError
from src.expected_return import NormalModel, estimation_window_for, fit_normal_model, predict_series
from src.market_data import FactorSeries, ReturnSeries, TradingCalendar

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EventSpec:
    firm_id: str
    submission_date: pd.Timestamp
    event_date: pd.Timestamp
    windows: Tuple[int, ...] = DEFAULT_WINDOWS
    report_year: Optional[int] = None

    def __post_init__(self):
        if not self.windows:
            raise ValueError("an event needs at least one window")
        if any(w < 0 for w in self.windows):
            raise ValueError("window half-widths must be non-negative")
        if self.event_date <= self.submission_date:
            raise ValueError("event date must fall strictly after the submission date")

    @property
    def key(self) -> Tuple[str, pd.Timestamp]:
        return (self.firm_id, self.event_date)

    @property
    def widest(self) -> int:
        return max(self.windows)


@dataclass(frozen=True)
class AbnormalReturnSeries:
    event: EventSpec
    window: int
    # AR indexed by relative trading-day offset -window..window
    values: pd.Series
    dates: pd.DatetimeIndex

    def __post_init__(self):
        expected = list(range(-self.window, self.window + 1))
        if list(self.values.index) != expected:
            raise ValueError(f"AR offsets must run contiguously from {-self.window} to {self.window}")

    def narrow(self, window: int) -> "AbnormalReturnSeries":
        """Central sub-window of a wider AR series"""
        if window > self.window:
            raise ValueError(f"cannot narrow a [-{self.window},{self.window}] series to {window}")
        lo = self.window - window
        hi = self.window + window + 1
        return AbnormalReturnSeries(self.event, window, self.values.loc[-window:window], self.dates[lo:hi])


@dataclass(frozen=True)
class CARValue:
    event: EventSpec
    window: int
    car: float


@dataclass(frozen=True)
class CAARValue:
    window: int
    caar: float
    n_events: int


@dataclass(frozen=True)
class DroppedEvent:
    firm_id: str
    submission_date: pd.Timestamp
    reason: str


@dataclass(frozen=True)
class EventStudySettings:
    model: str = "fama_french"
    windows: Tuple[int, ...] = DEFAULT_WINDOWS
    estimation_length: int = DEFAULT_ESTIMATION_LENGTH
    min_observations: int = DEFAULT_MIN_OBSERVATIONS
    n_jobs: int = 1

    def __post_init__(self):
        if self.model not in NORMAL_MODELS:
            raise ValueError(f"unknown normal-return model {self.model!r}")
        if not self.windows:
            raise ValueError("at least one event window is required")


@dataclass
class EventStudyInputs:
    calendar: TradingCalendar
    returns: Dict[str, ReturnSeries]
    events: List[Dict]
    market: Optional[ReturnSeries] = None
    factors: Optional[FactorSeries] = None


@dataclass
class EventStudyResult:
    model: str
    cars: pd.DataFrame
    caars: pd.DataFrame
    mean_ar: pd.DataFrame
    dropped: List[DroppedEvent] = field(default_factory=list)
    abnormal_returns: List[AbnormalReturnSeries] = field(default_factory=list)
    events: List[EventSpec] = field(default_factory=list)

    def car_lookup(self, window: int) -> Dict[Tuple[str, pd.Timestamp], float]:
        rows = self.cars[self.cars["window"] == window]
        return {(f, pd.Timestamp(d)): c for f, d, c in zip(rows["firm"], rows["event_date"], rows["car"])}


def resolve_event_date(submission, calendar: TradingCalendar) -> pd.Timestamp:
    """Reports go public the day after submission: first trading date strictly after it"""
    return calendar.next_after(submission)


def make_event(firm_id: str, submission, calendar: TradingCalendar,
               windows: Sequence[int] = DEFAULT_WINDOWS, report_year: Optional[int] = None) -> EventSpec:
    submission = pd.Timestamp(submission)
    if report_year is None:
        report_year = submission.year - 1
    return EventSpec(firm_id=firm_id, submission_date=submission,
                     event_date=resolve_event_date(submission, calendar),
                     windows=tuple(sorted(set(windows))), report_year=report_year)


def event_dates(event: EventSpec, window: int, calendar: TradingCalendar) -> pd.DatetimeIndex:
    pos = calendar.position(event.event_date)
    if pos - window < 0 or pos + window >= len(calendar):
        raise InsufficientDataError(f"{event.firm_id}: calendar does not cover [-{window},{window}] around "
                                    f"{event.event_date.date()}")
    return calendar.dates[pos - window:pos + window + 1]


def compute_ar(event: EventSpec, window: int, actual: ReturnSeries, model: NormalModel,
               calendar: TradingCalendar, market: Optional[ReturnSeries] = None,
               factors: Optional[FactorSeries] = None) -> AbnormalReturnSeries:
    """AR_t = actual_t - normal_t for each trading-day offset in [-window, window]"""
    dates = event_dates(event, window, calendar)
    missing = dates.difference(actual.returns.index)
    if len(missing):
        raise InsufficientDataError(f"{event.firm_id}: no return on {len(missing)} event-window days "
                                    f"(first {missing[0].date()})")
    observed = actual.returns.loc[dates].to_numpy(dtype=float)
    normal = predict_series(model, dates, market=market, factors=factors).to_numpy()
    values = pd.Series(observed - normal, index=range(-window, window + 1), name="ar")
    return AbnormalReturnSeries(event, window, values, dates)


def compute_car(ar: AbnormalReturnSeries) -> CARValue:
    return CARValue(ar.event, ar.window, math.fsum(ar.values.to_numpy()))


def compute_caar(cars: Sequence[CARValue], window: int) -> CAARValue:
    if not cars:
        raise InsufficientDataError("CAAR needs at least one CAR")
    windows = {c.window for c in cars}
    if windows != {window}:
        raise ValueError(f"CARs mix windows {sorted(windows)}; expected only {window}")
    return CAARValue(window, math.fsum(c.car for c in cars) / len(cars), len(cars))


def _study_one(request: Dict, inputs: EventStudyInputs, settings: EventStudySettings, model_kind: str):
    firm = request["firm"]
    submission = pd.Timestamp(request["submission_date"])
    try:
        event = make_event(firm, submission, inputs.calendar, settings.windows, request.get("report_year"))
        actual = inputs.returns.get(firm)
        if actual is None:
            raise InsufficientDataError(f"{firm}: no price data")
        window = estimation_window_for(event.event_date, inputs.calendar, event.widest,
                                       settings.estimation_length, settings.min_observations)
        model = fit_normal_model(model_kind, actual, window, market=inputs.market, factors=inputs.factors)
        widest = compute_ar(event, event.widest, actual, model, inputs.calendar,
                            market=inputs.market, factors=inputs.factors)
        return event, widest, None
    except (EventSentimentError, ValueError) as e:
        return None, None, DroppedEvent(firm, submission, str(e))


def _overlap_flags(events: List[EventSpec], calendar: TradingCalendar) -> Dict[Tuple[str, pd.Timestamp], bool]:
    flags = {e.key: False for e in events}
    by_firm: Dict[str, List[EventSpec]] = {}
    for e in events:
        by_firm.setdefault(e.firm_id, []).append(e)
    for firm_events in by_firm.values():
        spans = [(calendar.position(e.event_date) - e.widest, calendar.position(e.event_date) + e.widest, e)
                 for e in firm_events]
        for i, (lo_a, hi_a, a) in enumerate(spans):
            for lo_b, hi_b, b in spans[i + 1:]:
                if lo_a <= hi_b and lo_b <= hi_a:
                    flags[a.key] = flags[b.key] = True
    return flags


def run_event_study(inputs: EventStudyInputs, settings: EventStudySettings,
                    model_kind: Optional[str] = None) -> EventStudyResult:
    """
    Per-event CARs and per-window CAARs for every configured window.

    Each event is fitted once and its widest AR series is narrowed for the
    smaller windows. Failing events are dropped with a reason; output order is
    (firm, event_date) regardless of completion order.
    """
    model_kind = model_kind or settings.model
    windows = tuple(sorted(set(settings.windows)))
    outcomes = Parallel(n_jobs=settings.n_jobs, prefer="threads")(
        delayed(_study_one)(request, inputs, settings, model_kind) for request in inputs.events
    )

    dropped = [d for _, _, d in outcomes if d is not None]
    for d in dropped:
        logger.warning("Dropped event %s submitted %s: %s", d.firm_id, d.submission_date.date(), d.reason)
    kept = sorted(((e, ar) for e, ar, _ in outcomes if e is not None), key=lambda pair: pair[0].key)

    # one event per (firm, event_date)
    unique: Dict[Tuple[str, pd.Timestamp], Tuple[EventSpec, AbnormalReturnSeries]] = {}
    for event, ar in kept:
        if event.key in unique:
            dropped.append(DroppedEvent(event.firm_id, event.submission_date,
                                        f"duplicate of an event already resolved to {event.event_date.date()}"))
            continue
        unique[event.key] = (event, ar)
    kept = list(unique.values())
    overlaps = _overlap_flags([e for e, _ in kept], inputs.calendar)

    car_rows = []
    caar_rows = []
    mean_ar_rows = []
    series: List[AbnormalReturnSeries] = []
    for w in windows:
        narrowed = [ar.narrow(w) for _, ar in kept]
        series.extend(narrowed)
        cars = [compute_car(ar) for ar in narrowed]
        for c in cars:
            car_rows.append({"firm": c.event.firm_id, "event_date": c.event.event_date, "window": w,
                             "car": c.car, "overlap": overlaps[c.event.key]})
        if cars:
            caar = compute_caar(cars, w)
            caar_rows.append({"window": w, "caar": caar.caar, "n_events": caar.n_events})
            stacked = np.vstack([ar.values.to_numpy() for ar in narrowed])
            for offset, mean in zip(range(-w, w + 1), stacked.mean(axis=0)):
                mean_ar_rows.append({"window": w, "offset": offset, "mean_ar": float(mean), "n_events": len(cars)})

    cars_frame = pd.DataFrame(car_rows, columns=["firm", "event_date", "window", "car", "overlap"])
    if not cars_frame.empty:
        cars_frame = cars_frame.sort_values(["firm", "event_date", "window"], kind="mergesort").reset_index(drop=True)
    logger.info("Event study (%s): %d events kept, %d dropped", model_kind, len(kept), len(dropped))
    return EventStudyResult(
        model=model_kind,
        cars=cars_frame,
        caars=pd.DataFrame(caar_rows, columns=["window", "caar", "n_events"]),
        mean_ar=pd.DataFrame(mean_ar_rows, columns=["window", "offset", "mean_ar", "n_events"]),
        dropped=sorted(dropped, key=lambda d: (d.firm_id, d.submission_date)),
        abnormal_returns=series,
        events=[e for e, _ in kept],
    )


def compare_normal_models(inputs: EventStudyInputs, settings: EventStudySettings,
                          models: Iterable[str] = NORMAL_MODELS) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """
    Run the study under each normal-return model.

    Returns the CAAR table (model, window, caar, n_events) and the pairwise
    correlation of per-event CARs between models for each window.
    """
    results = {}
    for kind in models:
        if kind == "market" and inputs.market is None:
            continue
        if kind == "fama_french" and inputs.factors is None:
            continue
        results[kind] = run_event_study(inputs, settings, model_kind=kind)

    caar_rows = []
    for kind, result in results.items():
        for row in result.caars.itertuples(index=False):
            caar_rows.append({"model": kind, "window": row.window, "caar": row.caar, "n_events": row.n_events})

    corr_rows = []
    kinds = list(results)
    for w in sorted(set(settings.windows)):
        for i, a in enumerate(kinds):
            for b in kinds[i + 1:]:
                left = results[a].car_lookup(w)
                right = results[b].car_lookup(w)
                common = sorted(set(left) & set(right))
                corr = float("nan")
                if len(common) > 1:
                    x = np.array([left[k] for k in common])
                    y = np.array([right[k] for k in common])
                    if x.std() > 0 and y.std() > 0:
                        corr = float(np.corrcoef(x, y)[0, 1])
                corr_rows.append({"window": w, "model_a": a, "model_b": b, "n_events": len(common),
                                  "car_correlation": corr})
    return (pd.DataFrame(caar_rows, columns=["model", "window", "caar", "n_events"]),
            pd.DataFrame(corr_rows, columns=["window", "model_a", "model_b", "n_events", "car_correlation"]))
