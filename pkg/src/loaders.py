"""
Readers for the toolkit's CSV / JSONL / JSON input files
"""
import json
import logging
import os
from typing import Dict, List, Optional, Sequence

import pandas as pd

from config.taxonomy import FACTOR_COLUMNS, RISK_FREE_COLUMN, Industry
from src.classifier import TokenizedDocument
from src.errors import DataValidationError
from src.market_data import FactorSeries, PriceSeries, TradingCalendar
from src.sentiment_features import ParagraphAnnotation

logger = logging.getLogger(__name__)

PRICE_COLUMNS = ("instrument", "date", "close")
EVENT_COLUMNS = ("firm", "submission_date")
FUNDAMENTAL_COLUMNS = ("firm", "date", "market_cap", "total_assets", "net_income",
                       "total_liabilities", "industry")


def _read_csv(path: str, required: Sequence[str]) -> pd.DataFrame:
    if not os.path.exists(path):
        raise DataValidationError("file not found", path=path)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DataValidationError(f"unreadable CSV ({e})", path=path)
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise DataValidationError(f"header is missing columns {missing}", path=path, line=1)
    return frame


def _parse_dates(frame: pd.DataFrame, column: str, path: str) -> pd.Series:
    parsed = pd.to_datetime(frame[column], format="%Y-%m-%d", errors="coerce")
    bad = parsed.isna()
    if bad.any():
        row = int(bad.to_numpy().argmax())
        raise DataValidationError(f"bad ISO date {frame[column].iloc[row]!r} in column {column!r}",
                                  path=path, line=row + 2)
    return parsed


def _parse_floats(frame: pd.DataFrame, column: str, path: str) -> pd.Series:
    parsed = pd.to_numeric(frame[column], errors="coerce")
    bad = parsed.isna()
    if bad.any():
        row = int(bad.to_numpy().argmax())
        raise DataValidationError(f"bad number {frame[column].iloc[row]!r} in column {column!r}",
                                  path=path, line=row + 2)
    return parsed.astype(float)


def _check_strictly_increasing(dates: pd.Series, path: str, label: str):
    values = dates.to_numpy()
    for i in range(1, len(values)):
        if values[i] <= values[i - 1]:
            raise DataValidationError(f"{label}: dates not strictly increasing", path=path,
                                      line=int(dates.index[i]) + 2)


def load_prices(path: str) -> Dict[str, PriceSeries]:
    """Prices CSV (`instrument,date,close`) into one PriceSeries per instrument"""
    frame = _read_csv(path, PRICE_COLUMNS)
    frame["date"] = _parse_dates(frame, "date", path)
    frame["close"] = _parse_floats(frame, "close", path)
    bad = frame["close"] <= 0
    if bad.any():
        row = int(bad.to_numpy().argmax())
        raise DataValidationError("close price must be positive", path=path, line=row + 2)

    series = {}
    for instrument, rows in frame.groupby("instrument", sort=True):
        _check_strictly_increasing(rows["date"], path, f"instrument {instrument}")
        closes = pd.Series(rows["close"].to_numpy(), index=pd.DatetimeIndex(rows["date"]), name=instrument)
        series[instrument] = PriceSeries(instrument, closes)
    logger.info("Loaded prices for %d instruments from %s", len(series), path)
    return series


def load_factors(path: str) -> FactorSeries:
    """Factors CSV with daily fractions (not percent)"""
    columns = ("date", *FACTOR_COLUMNS, RISK_FREE_COLUMN)
    frame = _read_csv(path, columns)
    dates = _parse_dates(frame, "date", path)
    _check_strictly_increasing(dates, path, "factors")
    data = {c: _parse_floats(frame, c, path).to_numpy() for c in columns[1:]}
    factors = pd.DataFrame(data, index=pd.DatetimeIndex(dates))
    logger.info("Loaded %d factor rows from %s", len(factors), path)
    return FactorSeries(factors)


def load_calendar(path: str) -> TradingCalendar:
    """One ISO date per line; blank lines ignored"""
    if not os.path.exists(path):
        raise DataValidationError("file not found", path=path)
    dates = []
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, 1):
            text = line.strip()
            if not text:
                continue
            try:
                dates.append(pd.Timestamp(pd.to_datetime(text, format="%Y-%m-%d")))
            except ValueError:
                raise DataValidationError(f"bad ISO date {text!r}", path=path, line=line_no)
    index = pd.DatetimeIndex(dates)
    if not (index.is_unique and index.is_monotonic_increasing):
        raise DataValidationError("calendar dates must be strictly increasing", path=path)
    return TradingCalendar(index)


def load_events(path: str) -> List[Dict]:
    """Events CSV (`firm,submission_date[,report_year]`) as plain records"""
    frame = _read_csv(path, EVENT_COLUMNS)
    dates = _parse_dates(frame, "submission_date", path)
    has_year = "report_year" in frame.columns
    events = []
    for i, (firm, date) in enumerate(zip(frame["firm"], dates)):
        if not firm:
            raise DataValidationError("empty firm id", path=path, line=i + 2)
        report_year: Optional[int] = None
        if has_year and frame["report_year"].iloc[i] != "":
            try:
                report_year = int(frame["report_year"].iloc[i])
            except ValueError:
                raise DataValidationError("report_year must be an integer", path=path, line=i + 2)
        events.append({"firm": firm, "submission_date": date, "report_year": report_year})
    logger.info("Loaded %d events from %s", len(events), path)
    return events


def load_fundamentals(path: str) -> pd.DataFrame:
    """Fundamentals CSV, typed and sorted by (firm, date)"""
    frame = _read_csv(path, FUNDAMENTAL_COLUMNS)
    frame["date"] = _parse_dates(frame, "date", path)
    for column in ("market_cap", "total_assets", "net_income", "total_liabilities"):
        frame[column] = _parse_floats(frame, column, path)
    known = {i.value for i in Industry}
    bad = ~frame["industry"].isin(known)
    if bad.any():
        row = int(bad.to_numpy().argmax())
        raise DataValidationError(f"unknown industry {frame['industry'].iloc[row]!r}", path=path, line=row + 2)
    return frame.sort_values(["firm", "date"], kind="mergesort").reset_index(drop=True)


def read_jsonl(path: str) -> List[Dict]:
    """Parse a JSONL file, attaching `_line` to each record for error reporting"""
    if not os.path.exists(path):
        raise DataValidationError("file not found", path=path)
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise DataValidationError(f"invalid JSON ({e.msg})", path=path, line=line_no)
            if not isinstance(record, dict):
                raise DataValidationError("each line must be a JSON object", path=path, line=line_no)
            record["_line"] = line_no
            records.append(record)
    return records


def load_annotations(path: str) -> List[ParagraphAnnotation]:
    annotations = [ParagraphAnnotation.from_record(r, path=path) for r in read_jsonl(path)]
    logger.info("Loaded %d annotated paragraphs from %s", len(annotations), path)
    return annotations


def load_corpus(path: str) -> List[TokenizedDocument]:
    documents = [TokenizedDocument.from_record(r, path=path) for r in read_jsonl(path)]
    seen = set()
    for doc in documents:
        if doc.doc_id in seen:
            raise DataValidationError(f"duplicate document id {doc.doc_id!r}", path=path)
        seen.add(doc.doc_id)
    logger.info("Loaded %d documents from %s", len(documents), path)
    return documents


def load_splits(path: str) -> Dict[str, List[str]]:
    """Split manifest: JSON object mapping split name to a list of document ids"""
    if not os.path.exists(path):
        raise DataValidationError("file not found", path=path)
    with open(path, "r", encoding="utf-8") as f:
        try:
            manifest = json.load(f)
        except json.JSONDecodeError as e:
            raise DataValidationError(f"invalid JSON ({e.msg})", path=path, line=e.lineno)
    if not isinstance(manifest, dict) or not all(isinstance(v, list) for v in manifest.values()):
        raise DataValidationError("split manifest must map split names to id lists", path=path)
    return {name: [str(i) for i in ids] for name, ids in manifest.items()}


def load_annotator_labels(path: str, field: str) -> Dict[str, str]:
    """Annotator file (JSONL with `id` and label fields) as id -> label"""
    labels = {}
    for record in read_jsonl(path):
        if "id" not in record or field not in record:
            raise DataValidationError(f"record needs 'id' and {field!r}", path=path, line=record["_line"])
        labels[str(record["id"])] = str(record[field])
    return labels
