"""
Aspect-sentiment annotations and firm financials turned into regression design matrices
"""
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from config.taxonomy import (
    CONTROL_COLUMNS,
    GROUPING_KEYS,
    REGRESSION_MODELS,
    SCORE_COLUMNS,
    Aspect,
    Industry,
    Sentiment,
    SourceSection,
)
from src.errors import DataValidationError, InsufficientDataError
from src.event_study import EventSpec
from src.market_data import ReturnSeries

logger = logging.getLogger(__name__)

VOLATILITY_LOOKBACK = 252
MIN_VOLATILITY_OBSERVATIONS = 20


@dataclass(frozen=True)
class ParagraphAnnotation:
    firm_id: str
    report_year: int
    source: SourceSection
    pairs: Tuple[Tuple[Aspect, Sentiment], ...]

    def __post_init__(self):
        if not self.pairs:
            raise DataValidationError(f"{self.firm_id} {self.report_year}: paragraph has no aspect-sentiment pairs")

    @classmethod
    def from_record(cls, record: Mapping, path: Optional[str] = None) -> "ParagraphAnnotation":
        line = record.get("_line")
        try:
            pairs = tuple((Aspect(p["aspect"]), Sentiment(p["sentiment"])) for p in record["pairs"])
            return cls(firm_id=str(record["firm"]), report_year=int(record["year"]),
                       source=SourceSection(record["source"]), pairs=pairs)
        except KeyError as e:
            raise DataValidationError(f"missing field {e}", path=path, line=line)
        except (ValueError, TypeError) as e:
            if isinstance(e, DataValidationError):
                raise DataValidationError(str(e), path=path, line=line)
            raise DataValidationError(f"unknown or malformed label ({e})", path=path, line=line)

    @property
    def document(self) -> Tuple[str, int]:
        return (self.firm_id, self.report_year)


@dataclass(frozen=True)
class FirmFundamentals:
    firm_id: str
    date: pd.Timestamp
    market_cap: float
    total_assets: float
    net_income: float
    total_liabilities: float
    industry: Industry


@dataclass(frozen=True)
class Controls:
    firm_size: float
    tobins_q: float
    roa: float
    leverage: float
    volatility: float

    def __post_init__(self):
        values = [self.firm_size, self.tobins_q, self.roa, self.leverage, self.volatility]
        if not all(math.isfinite(v) for v in values):
            raise DataValidationError("controls must be finite")
        if self.leverage < 0 or self.volatility < 0:
            raise DataValidationError("leverage and volatility must be non-negative")

    def as_list(self) -> List[float]:
        return [getattr(self, c) for c in CONTROL_COLUMNS]


class SentimentScores(NamedTuple):
    score1: Optional[float]
    score2: Optional[float]

    @property
    def missing(self) -> bool:
        return self.score1 is None


@dataclass(frozen=True)
class DocumentFeatureVector:
    event: EventSpec
    counts: Dict[str, Dict[str, int]]
    scores: SentimentScores
    controls: Controls
    industry: Industry
    n_pairs: int = 0

    @property
    def key(self) -> Tuple[str, pd.Timestamp]:
        return self.event.key


@dataclass
class DesignMatrix:
    model_id: int
    X: np.ndarray
    y: np.ndarray
    columns: List[str]
    row_keys: List[Tuple[str, pd.Timestamp]]
    dropped: List[Tuple[Tuple[str, pd.Timestamp], str]] = field(default_factory=list)


def _grouping_keys(grouping: str) -> List[str]:
    if grouping not in GROUPING_KEYS:
        raise ValueError(f"unknown grouping {grouping!r}")
    return GROUPING_KEYS[grouping]()


def aggregate_counts(annotations: Sequence[ParagraphAnnotation], grouping: str) -> Dict[str, int]:
    """
    Count aspect-sentiment pairs of one document over the closed key set of a grouping.

    Keys are `sentiment`, `source.sentiment` or `aspect.sentiment`; absent keys
    are present with a zero count.
    """
    keys = _grouping_keys(grouping)
    documents = {a.document for a in annotations}
    if len(documents) > 1:
        raise DataValidationError(f"annotations span {len(documents)} documents; expected one")

    counts = dict.fromkeys(keys, 0)
    for paragraph in annotations:
        source = SourceSection(paragraph.source)
        for aspect, sentiment in paragraph.pairs:
            aspect = Aspect(aspect)
            sentiment = Sentiment(sentiment)
            if grouping == "sentiment":
                key = sentiment.value
            elif grouping == "source_sentiment":
                key = f"{source.value}.{sentiment.value}"
            else:
                key = f"{aspect.value}.{sentiment.value}"
            counts[key] += 1
    return counts


def sentiment_scores(p: int, n: int) -> SentimentScores:
    """score1 = (p-n+1)/(p+n), score2 = (p-n+2)/(p+n); missing when p+n = 0"""
    if p < 0 or n < 0:
        raise ValueError(f"counts must be non-negative (p={p}, n={n})")
    total = p + n
    if total == 0:
        return SentimentScores(None, None)
    return SentimentScores((p - n + 1) / total, (p - n + 2) / total)


def fundamentals_as_of(fundamentals: pd.DataFrame, firm_id: str, date) -> FirmFundamentals:
    rows = fundamentals[(fundamentals["firm"] == firm_id) & (fundamentals["date"] <= pd.Timestamp(date))]
    if rows.empty:
        raise InsufficientDataError(f"{firm_id}: no fundamentals on or before {pd.Timestamp(date).date()}")
    row = rows.iloc[-1]
    return FirmFundamentals(firm_id=firm_id, date=row["date"], market_cap=float(row["market_cap"]),
                            total_assets=float(row["total_assets"]), net_income=float(row["net_income"]),
                            total_liabilities=float(row["total_liabilities"]), industry=Industry(row["industry"]))


def compute_controls(financials: FirmFundamentals, returns: ReturnSeries, event_date,
                     lookback: int = VOLATILITY_LOOKBACK,
                     min_observations: int = MIN_VOLATILITY_OBSERVATIONS) -> Controls:
    if financials.market_cap <= 0 or financials.total_assets <= 0:
        raise DataValidationError(f"{financials.firm_id}: market cap and total assets must be positive")
    if financials.total_liabilities < 0:
        raise DataValidationError(f"{financials.firm_id}: total liabilities must be non-negative")

    history = returns.returns.loc[returns.returns.index < pd.Timestamp(event_date)].iloc[-lookback:]
    if len(history) < min_observations:
        raise InsufficientDataError(f"{financials.firm_id}: {len(history)} returns before the event, "
                                    f"need {min_observations} for volatility")
    return Controls(
        firm_size=math.log(financials.market_cap),
        tobins_q=math.log(financials.market_cap / financials.total_assets),
        roa=financials.net_income / financials.total_assets,
        leverage=financials.total_liabilities / financials.total_assets,
        volatility=float(np.std(history.to_numpy(dtype=float), ddof=1)),
    )


def group_documents(annotations: Iterable[ParagraphAnnotation]) -> Dict[Tuple[str, int], List[ParagraphAnnotation]]:
    documents: Dict[Tuple[str, int], List[ParagraphAnnotation]] = {}
    for a in annotations:
        documents.setdefault(a.document, []).append(a)
    return documents


def build_feature_vector(event: EventSpec, paragraphs: Sequence[ParagraphAnnotation],
                         financials: FirmFundamentals, returns: ReturnSeries) -> DocumentFeatureVector:
    counts = {grouping: aggregate_counts(paragraphs, grouping) for grouping in GROUPING_KEYS}
    sentiment = counts["sentiment"]
    scores = sentiment_scores(sentiment[Sentiment.POSITIVE.value], sentiment[Sentiment.NEGATIVE.value])
    return DocumentFeatureVector(
        event=event,
        counts=counts,
        scores=scores,
        controls=compute_controls(financials, returns, event.event_date),
        industry=financials.industry,
        n_pairs=sum(len(p.pairs) for p in paragraphs),
    )


def build_feature_vectors(events: Sequence[EventSpec], annotations: Iterable[ParagraphAnnotation],
                          fundamentals: pd.DataFrame, returns: Mapping[str, ReturnSeries]
                          ) -> Tuple[List[DocumentFeatureVector], List[Tuple[str, str]]]:
    """
    Join events with their annotated report, fundamentals and return history.

    Returns the feature vectors in event order plus (event label, reason) for
    every event that could not be featurised.
    """
    documents = group_documents(annotations)
    vectors = []
    skipped = []
    for event in events:
        label = f"{event.firm_id} {event.event_date.date()}"
        paragraphs = documents.get((event.firm_id, event.report_year))
        if not paragraphs:
            skipped.append((label, f"no annotated report for {event.report_year}"))
            continue
        try:
            financials = fundamentals_as_of(fundamentals, event.firm_id, event.event_date)
            series = returns.get(event.firm_id)
            if series is None:
                raise InsufficientDataError(f"{event.firm_id}: no return history")
            vectors.append(build_feature_vector(event, paragraphs, financials, series))
        except (InsufficientDataError, DataValidationError) as e:
            skipped.append((label, str(e)))
    for label, reason in skipped:
        logger.warning("No feature vector for %s: %s", label, reason)
    return vectors, skipped


def choose_industry_baseline(feature_vectors: Sequence[DocumentFeatureVector]) -> Industry:
    """Most frequent industry in the sample; ties go to the earlier enumeration member"""
    counts = Counter(v.industry for v in feature_vectors)
    return max(Industry, key=lambda i: (counts.get(i, 0), -list(Industry).index(i)))


def design_columns(model_id: int, baseline: Industry) -> List[str]:
    spec = REGRESSION_MODELS[model_id]
    columns = ["const"] + _grouping_keys(spec["grouping"]) + list(CONTROL_COLUMNS)
    columns += [f"industry.{i.value}" for i in Industry if i != baseline]
    if spec["scores"]:
        columns += list(SCORE_COLUMNS)
    return columns


def build_design_matrix(model_id: int, feature_vectors: Sequence[DocumentFeatureVector],
                        cars: Mapping[Tuple[str, pd.Timestamp], float],
                        baseline: Optional[Industry] = None) -> DesignMatrix:
    """
    Regression design for Models 1-5.

    Columns: intercept, the model's count columns, five controls, seven
    industry dummies (baseline dropped) and, for Models 2 and 4, both scores.
    Rows without a defined score are dropped for the score models.
    """
    if model_id not in REGRESSION_MODELS:
        raise ValueError(f"unknown regression model {model_id}")
    spec = REGRESSION_MODELS[model_id]
    if baseline is None:
        baseline = choose_industry_baseline(feature_vectors)
    baseline = Industry(baseline)
    columns = design_columns(model_id, baseline)
    keys = _grouping_keys(spec["grouping"])
    dummies = [i for i in Industry if i != baseline]

    rows = []
    targets = []
    row_keys = []
    dropped = []
    for vector in feature_vectors:
        if vector.key not in cars:
            raise DataValidationError(f"no CAR for {vector.event.firm_id} {vector.event.event_date.date()}")
        if spec["scores"] and vector.scores.missing:
            dropped.append((vector.key, "no positive or negative pairs: sentiment score undefined"))
            continue
        counts = vector.counts[spec["grouping"]]
        row = [1.0] + [float(counts[k]) for k in keys] + vector.controls.as_list()
        row += [1.0 if vector.industry == i else 0.0 for i in dummies]
        if spec["scores"]:
            row += [vector.scores.score1, vector.scores.score2]
        rows.append(row)
        targets.append(float(cars[vector.key]))
        row_keys.append(vector.key)

    if dropped:
        logger.warning("Model %d: dropped %d rows without a sentiment score", model_id, len(dropped))
    if not rows:
        raise InsufficientDataError(f"model {model_id}: every row was dropped")
    X = np.asarray(rows, dtype=float)
    if X.shape[1] != len(columns):
        raise DataValidationError(f"model {model_id}: built {X.shape[1]} columns, expected {len(columns)}")
    return DesignMatrix(model_id, X, np.asarray(targets, dtype=float), columns, row_keys, dropped)
