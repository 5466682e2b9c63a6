"""
Seeded synthetic inputs: calendars, factor and price paths, events, annotations, fundamentals and corpora
"""
import json
import logging
import os
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from config.taxonomy import (
    CONTROL_COLUMNS,
    FACTOR_COLUMNS,
    RISK_FREE_COLUMN,
    Aspect,
    Industry,
    Sentiment,
    SourceSection,
    aspect_sentiment_keys,
    sentiment_keys,
    source_sentiment_keys,
)
from src.event_study import EventSpec
from src.sentiment_features import Controls, DocumentFeatureVector, sentiment_scores

logger = logging.getLogger(__name__)

MARKET_INSTRUMENT = "SET"
FACTOR_SCALES = {"mkt_rf": 0.010, "smb": 0.005, "hml": 0.005, "rmw": 0.004, "cma": 0.004}
DAILY_RF = 0.0001
# Thai consonants, so generated tokens survive the Latin/digit filter
_THAI_LETTERS = [chr(c) for c in range(0x0E01, 0x0E2F)]

PLANTED_TERM = f"{Aspect.PROFIT_LOSS.value}.{Sentiment.NEGATIVE.value}"


def make_calendar(start: str = "2015-01-01", n_days: int = 780) -> pd.DatetimeIndex:
    """Weekday trading calendar"""
    return pd.bdate_range(start=start, periods=n_days)


def make_factors(dates: pd.DatetimeIndex, rng: np.random.Generator) -> pd.DataFrame:
    data = {c: rng.normal(0.0, FACTOR_SCALES[c], len(dates)) for c in FACTOR_COLUMNS}
    data[RISK_FREE_COLUMN] = np.full(len(dates), DAILY_RF)
    return pd.DataFrame(data, index=dates)


def simulate_factor_returns(factors: pd.DataFrame, alpha: float, loadings: Sequence[float], sigma: float,
                            rng: np.random.Generator) -> np.ndarray:
    """rf + alpha + loadings . factors + N(0, sigma) per day"""
    systematic = factors[list(FACTOR_COLUMNS)].to_numpy() @ np.asarray(loadings, dtype=float)
    return factors[RISK_FREE_COLUMN].to_numpy() + alpha + systematic + rng.normal(0.0, sigma, len(factors))


def prices_from_returns(log_returns: np.ndarray, start_price: float = 100.0) -> np.ndarray:
    return start_price * np.exp(np.concatenate([[0.0], np.cumsum(log_returns[1:])]))


def firm_ids(n_firms: int) -> List[str]:
    return [f"F{i:03d}" for i in range(1, n_firms + 1)]


def make_prices(firms: Sequence[str], factors: pd.DataFrame, rng: np.random.Generator,
                sigma: float = 0.012) -> pd.DataFrame:
    """Long prices table (instrument, date, close) including the market index"""
    frames = []
    market = factors["mkt_rf"].to_numpy() + factors[RISK_FREE_COLUMN].to_numpy()
    frames.append(pd.DataFrame({"instrument": MARKET_INSTRUMENT, "date": factors.index,
                                "close": prices_from_returns(market, 1500.0)}))
    for firm in firms:
        loadings = [rng.normal(1.0, 0.2)] + list(rng.normal(0.0, 0.3, len(FACTOR_COLUMNS) - 1))
        returns = simulate_factor_returns(factors, rng.normal(0.0, 0.0002), loadings, sigma, rng)
        frames.append(pd.DataFrame({"instrument": firm, "date": factors.index,
                                    "close": prices_from_returns(returns, float(rng.uniform(5, 200)))}))
    return pd.concat(frames, ignore_index=True)


def make_events(firms: Sequence[str], years: Sequence[int], rng: np.random.Generator) -> pd.DataFrame:
    """One annual report submission per firm and year, between mid-February and late March"""
    rows = []
    for firm in firms:
        for year in years:
            day = pd.Timestamp(f"{year}-02-15") + pd.Timedelta(days=int(rng.integers(0, 40)))
            rows.append({"firm": firm, "submission_date": day, "report_year": year - 1})
    return pd.DataFrame(rows)


def random_pairs(rng: np.random.Generator, n_pairs: int) -> List[Dict[str, str]]:
    aspects = list(Aspect)
    sentiments = list(Sentiment)
    return [{"aspect": aspects[int(rng.integers(len(aspects)))].value,
             "sentiment": sentiments[int(rng.choice(3, p=[0.3, 0.3, 0.4]))].value}
            for _ in range(n_pairs)]


def make_annotations(events: pd.DataFrame, rng: np.random.Generator, paragraphs_per_source: int = 2) -> List[Dict]:
    records = []
    for firm, year in zip(events["firm"], events["report_year"]):
        for source in SourceSection:
            for _ in range(paragraphs_per_source):
                records.append({"firm": firm, "year": int(year), "source": source.value,
                                "pairs": random_pairs(rng, int(rng.integers(1, 5)))})
    return records


def make_fundamentals(firms: Sequence[str], years: Sequence[int], rng: np.random.Generator) -> pd.DataFrame:
    industries = list(Industry)
    rows = []
    for i, firm in enumerate(firms):
        industry = industries[i % len(industries)]
        assets = float(rng.lognormal(22, 1))
        for year in years:
            rows.append({
                "firm": firm,
                "date": pd.Timestamp(f"{year}-12-31"),
                "market_cap": assets * float(rng.uniform(0.5, 2.5)),
                "total_assets": assets,
                "net_income": assets * float(rng.normal(0.05, 0.04)),
                "total_liabilities": assets * float(rng.uniform(0.2, 0.8)),
                "industry": industry.value,
            })
    return pd.DataFrame(rows)


def random_token(rng: np.random.Generator, length: Optional[int] = None) -> str:
    length = length or int(rng.integers(3, 7))
    return "".join(_THAI_LETTERS[int(i)] for i in rng.integers(0, len(_THAI_LETTERS), length))


def make_corpus(n_docs: int, rng: np.random.Generator) -> List[Dict]:
    """
    Token-list documents whose aspect and sentiment are signalled by label-specific
    tokens mixed with shared noise, Latin words, numbers and punctuation.
    """
    signature = {a.value: [random_token(rng) for _ in range(8)] for a in Aspect}
    polarity = {s.value: [random_token(rng) for _ in range(6)] for s in Sentiment}
    shared = [random_token(rng) for _ in range(40)]
    aspects = list(Aspect)
    records = []
    for i in range(n_docs):
        aspect = aspects[int(rng.integers(len(aspects)))].value
        sentiment = list(Sentiment)[int(rng.integers(3))].value
        tokens = list(rng.choice(signature[aspect], 4)) + list(rng.choice(polarity[sentiment], 2))
        tokens += list(rng.choice(shared, 5)) + ["EBITDA", str(int(rng.integers(1990, 2030))), "%", "ๆ"]
        rng.shuffle(tokens)
        records.append({"id": f"D{i:05d}", "tokens": [str(t) for t in tokens], "aspect": aspect,
                        "sentiment": sentiment})
    return records


def make_splits(ids: Sequence[str], rng: np.random.Generator,
                fractions: Tuple[float, float] = (0.7, 0.15)) -> Dict[str, List[str]]:
    order = list(rng.permutation(list(ids)))
    n_train = int(len(order) * fractions[0])
    n_dev = int(len(order) * fractions[1])
    return {"train": sorted(order[:n_train]), "dev": sorted(order[n_train:n_train + n_dev]),
            "test": sorted(order[n_train + n_dev:])}


def make_annotator_pair(records: Sequence[Dict], field: str, agreement: float,
                        rng: np.random.Generator) -> Tuple[List[Dict], List[Dict]]:
    """Second annotator copies the first with probability `agreement`, otherwise picks at random"""
    labels = [a.value for a in Aspect] if field == "aspect" else [s.value for s in Sentiment]
    first = [{"id": r["id"], field: r[field]} for r in records]
    second = []
    for r in records:
        label = r[field] if rng.random() < agreement else labels[int(rng.integers(len(labels)))]
        second.append({"id": r["id"], field: label})
    return first, second


def planted_signal_dataset(seed: int, n: int = 700, coefficient: float = -0.004, sigma: float = 0.02,
                           mean_count: float = 2.0, term: str = PLANTED_TERM
                           ) -> Tuple[List[DocumentFeatureVector], Dict[Tuple[str, pd.Timestamp], float]]:
    """
    Feature vectors with Poisson aspect-sentiment counts and CARs in which only
    `term` carries a true coefficient.
    """
    rng = np.random.default_rng(seed)
    as_keys = aspect_sentiment_keys()
    ss_keys = source_sentiment_keys()
    sources = list(SourceSection)
    industries = list(Industry)
    planted = as_keys.index(term)
    vectors = []
    cars = {}
    base = pd.Timestamp("2018-03-01")
    for i in range(n):
        counts = rng.poisson(mean_count, len(as_keys))
        aspect_counts = {k: int(c) for k, c in zip(as_keys, counts)}
        by_sentiment = {s: sum(aspect_counts[k] for k in as_keys if k.endswith(f".{s}")) for s in sentiment_keys()}
        source_counts = dict.fromkeys(ss_keys, 0)
        for s, total in by_sentiment.items():
            for src, c in zip(sources, rng.multinomial(total, [1 / len(sources)] * len(sources))):
                source_counts[f"{src.value}.{s}"] += int(c)
        submission = base + pd.Timedelta(days=i)
        event = EventSpec(firm_id=f"P{i:04d}", submission_date=submission,
                          event_date=submission + pd.Timedelta(days=1), report_year=2017)
        controls = Controls(**{c: v for c, v in zip(CONTROL_COLUMNS, (
            float(rng.normal(22, 1)), float(rng.normal(0, 0.5)), float(rng.normal(0.05, 0.05)),
            float(rng.uniform(0.1, 0.9)), float(rng.uniform(0.005, 0.04))))})
        vectors.append(DocumentFeatureVector(
            event=event,
            counts={"sentiment": by_sentiment, "source_sentiment": source_counts, "aspect_sentiment": aspect_counts},
            scores=sentiment_scores(by_sentiment[Sentiment.POSITIVE.value], by_sentiment[Sentiment.NEGATIVE.value]),
            controls=controls,
            industry=industries[i % len(industries)],
            n_pairs=int(counts.sum()),
        ))
        cars[event.key] = coefficient * float(counts[planted]) + float(rng.normal(0.0, sigma))
    return vectors, cars


def _write_jsonl(path: str, records: Sequence[Dict]):
    with open(path, "w", encoding="utf-8") as f:
        for record in records:
            f.write(json.dumps(record, ensure_ascii=False) + "\n")


def write_sample_inputs(out_dir: str, seed: int = 0, n_firms: int = 60, n_docs: int = 600) -> Dict[str, str]:
    """
    Write a complete, internally consistent input set plus `config.json`.

    Returns the written paths keyed by config name.
    """
    rng = np.random.default_rng(seed)
    os.makedirs(out_dir, exist_ok=True)
    dates = make_calendar()
    years = (2016, 2017)
    firms = firm_ids(n_firms)
    factors = make_factors(dates, rng)
    prices = make_prices(firms, factors, rng)
    events = make_events(firms, years, rng)
    fundamentals = make_fundamentals(firms, [y - 1 for y in years], rng)
    corpus = make_corpus(n_docs, rng)
    splits = make_splits([r["id"] for r in corpus], rng)
    annotator_a, annotator_b = make_annotator_pair(corpus[:200], "aspect", 0.8, rng)

    paths = {name: os.path.join(out_dir, filename) for name, filename in (
        ("calendar", "calendar.txt"), ("prices", "prices.csv"), ("factors", "factors.csv"),
        ("events", "events.csv"), ("annotations", "annotations.jsonl"), ("fundamentals", "fundamentals.csv"),
        ("corpus", "corpus.jsonl"), ("splits", "splits.json"), ("annotator_a", "annotator_a.jsonl"),
        ("annotator_b", "annotator_b.jsonl"))}

    with open(paths["calendar"], "w", encoding="utf-8") as f:
        f.write("\n".join(d.strftime("%Y-%m-%d") for d in dates) + "\n")
    prices.to_csv(paths["prices"], index=False, lineterminator="\n", date_format="%Y-%m-%d", float_format="%.6f")
    factors.rename_axis("date").reset_index().to_csv(paths["factors"], index=False, lineterminator="\n",
                                                     date_format="%Y-%m-%d", float_format="%.8f")
    events.to_csv(paths["events"], index=False, lineterminator="\n", date_format="%Y-%m-%d")
    fundamentals.to_csv(paths["fundamentals"], index=False, lineterminator="\n", date_format="%Y-%m-%d")
    _write_jsonl(paths["annotations"], make_annotations(events, rng))
    _write_jsonl(paths["corpus"], corpus)
    _write_jsonl(paths["annotator_a"], annotator_a)
    _write_jsonl(paths["annotator_b"], annotator_b)
    with open(paths["splits"], "w", encoding="utf-8") as f:
        json.dump(splits, f, indent=2)

    config = {name: os.path.basename(path) for name, path in paths.items() if not name.startswith("annotator")}
    config.update({
        "annotators": [os.path.basename(paths["annotator_a"]), os.path.basename(paths["annotator_b"])],
        "market_instrument": MARKET_INSTRUMENT,
        "model": "fama_french",
        "windows": [1, 3, 5],
        "seed": seed,
        "resamples": 200,
        "ridge_lambda": 1.0,
        "out": "out",
    })
    paths["config"] = os.path.join(out_dir, "config.json")
    with open(paths["config"], "w", encoding="utf-8") as f:
        json.dump(config, f, indent=2, sort_keys=True)
    logger.info("Wrote sample inputs for %d firms and %d documents to %s", n_firms, n_docs, out_dir)
    return paths
