"""
Label schema and study constants for report-release event studies
"""
from enum import Enum
from typing import Dict, List, Tuple


class Aspect(str, Enum):
    BRAND = "Brand"
    PRODUCT_SERVICE = "Product/Service"
    ENVIRONMENT = "Environment"
    SOCIAL_PEOPLE = "Social&People"
    GOVERNANCE = "Governance"
    ECONOMICS = "Economics"
    POLITICAL = "Political"
    LEGAL = "Legal"
    DIVIDEND = "Dividend"
    INVESTMENT = "Investment"
    MERGERS_ACQUISITIONS = "M&A"
    PROFIT_LOSS = "Profit/Loss"
    RATING = "Rating"
    FINANCING = "Financing"
    TECHNOLOGY = "Technology"
    OTHERS = "Others"


class Sentiment(str, Enum):
    NEGATIVE = "negative"
    NEUTRAL = "neutral"
    POSITIVE = "positive"


class SourceSection(str, Enum):
    MDA = "MDA"
    RISK = "Risk"
    SUSTAINABILITY = "Sustainability"


class Industry(str, Enum):
    """SET broad industry groups"""
    AGRO = "AGRO"
    CONSUMP = "CONSUMP"
    FINCIAL = "FINCIAL"
    INDUS = "INDUS"
    PROPCON = "PROPCON"
    RESOURC = "RESOURC"
    SERVICE = "SERVICE"
    TECH = "TECH"


INDUSTRY_NAMES = {
    Industry.AGRO: "Agro & Food Industry",
    Industry.CONSUMP: "Consumer Products",
    Industry.FINCIAL: "Financials",
    Industry.INDUS: "Industrials",
    Industry.PROPCON: "Property & Construction",
    Industry.RESOURC: "Resources",
    Industry.SERVICE: "Services",
    Industry.TECH: "Technology",
}

# Event study defaults
DEFAULT_WINDOWS: Tuple[int, ...] = (1, 3, 5)
DEFAULT_ESTIMATION_LENGTH = 250
MIN_ESTIMATION_LENGTH = 30
DEFAULT_MIN_OBSERVATIONS = 60
NORMAL_MODELS: Tuple[str, ...] = ("constant_mean", "market", "fama_french")

FACTOR_COLUMNS: Tuple[str, ...] = ("mkt_rf", "smb", "hml", "rmw", "cma")
RISK_FREE_COLUMN = "rf"

CONTROL_COLUMNS: Tuple[str, ...] = ("firm_size", "tobins_q", "roa", "leverage", "volatility")
SCORE_COLUMNS: Tuple[str, ...] = ("score1", "score2")

# Regression model catalogue: sentiment grouping and whether scores enter
REGRESSION_MODELS: Dict[int, Dict] = {
    1: {"grouping": "sentiment", "scores": False},
    2: {"grouping": "sentiment", "scores": True},
    3: {"grouping": "source_sentiment", "scores": False},
    4: {"grouping": "source_sentiment", "scores": True},
    5: {"grouping": "aspect_sentiment", "scores": False},
}

ESTIMATORS: Tuple[str, ...] = ("ols", "ridge")


def sentiment_keys() -> List[str]:
    return [s.value for s in Sentiment]


def source_sentiment_keys() -> List[str]:
    return [f"{src.value}.{s.value}" for src in SourceSection for s in Sentiment]


def aspect_sentiment_keys() -> List[str]:
    return [f"{a.value}.{s.value}" for a in Aspect for s in Sentiment]


GROUPING_KEYS = {
    "sentiment": sentiment_keys,
    "source_sentiment": source_sentiment_keys,
    "aspect_sentiment": aspect_sentiment_keys,
}
