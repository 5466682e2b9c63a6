"""
Run configuration: JSON config file, command-line overrides and environment defaults
"""
import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Dict, List, Mapping, Optional, Tuple

from dotenv import load_dotenv

from config.taxonomy import (
    DEFAULT_ESTIMATION_LENGTH,
    DEFAULT_MIN_OBSERVATIONS,
    DEFAULT_WINDOWS,
    MIN_ESTIMATION_LENGTH,
    NORMAL_MODELS,
    REGRESSION_MODELS,
    Industry,
)
from src.errors import ConfigError

load_dotenv()

logger = logging.getLogger(__name__)

LOG_LEVEL_ENV = "EVENTSENT_LOG_LEVEL"
N_JOBS_ENV = "EVENTSENT_N_JOBS"
ALLOWED_WINDOWS = frozenset(DEFAULT_WINDOWS)
TASKS = ("aspect", "sentiment")
PATH_KEYS = ("prices", "factors", "events", "annotations", "fundamentals", "corpus", "splits", "calendar",
             "cars", "model_file")
OPTIONAL_KEYS = PATH_KEYS + ("market_instrument", "industry_baseline")
STR_KEYS = OPTIONAL_KEYS + ("model", "return_method", "task", "split", "out")
INT_KEYS = ("estimation_length", "min_observations", "seed", "resamples", "min_df", "epochs", "n_jobs")
FLOAT_KEYS = ("ridge_lambda", "learning_rate", "l2")
BOOL_KEYS = ("allow_any_windows",)
INT_LIST_KEYS = ("windows", "regression_models")
STR_LIST_KEYS = ("annotators",)

# inputs each command cannot run without
REQUIRED_PATHS = {
    "returns": ("prices",),
    "event-study": ("prices", "events"),
    "regress": ("events", "annotations", "fundamentals", "prices"),
    "classify-train": ("corpus", "splits"),
    "classify-eval": ("corpus", "splits", "model_file"),
    "classify-stats": ("corpus", "splits"),
    "classify-kappa": (),
}


def log_level() -> str:
    return os.getenv(LOG_LEVEL_ENV, "INFO").upper()


def default_n_jobs() -> int:
    value = os.getenv(N_JOBS_ENV, "1")
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{N_JOBS_ENV} must be an integer, got {value!r}")


@dataclass(frozen=True)
class RunConfig:
    prices: Optional[str] = None
    factors: Optional[str] = None
    events: Optional[str] = None
    annotations: Optional[str] = None
    fundamentals: Optional[str] = None
    corpus: Optional[str] = None
    splits: Optional[str] = None
    calendar: Optional[str] = None
    cars: Optional[str] = None
    model_file: Optional[str] = None
    annotators: Tuple[str, ...] = ()
    market_instrument: Optional[str] = None
    model: str = "fama_french"
    windows: Tuple[int, ...] = DEFAULT_WINDOWS
    allow_any_windows: bool = False
    estimation_length: int = DEFAULT_ESTIMATION_LENGTH
    min_observations: int = DEFAULT_MIN_OBSERVATIONS
    return_method: str = "log"
    seed: int = 0
    resamples: int = 10_000
    ridge_lambda: float = 1.0
    regression_models: Tuple[int, ...] = tuple(REGRESSION_MODELS)
    industry_baseline: Optional[str] = None
    task: str = "aspect"
    split: str = "test"
    min_df: int = 2
    learning_rate: float = 0.1
    l2: float = 1e-4
    epochs: int = 100
    n_jobs: int = field(default_factory=default_n_jobs)
    out: str = "out"

    def snapshot(self) -> Dict:
        return asdict(self)


def _resolve(base_dir: str, value: Optional[str]) -> Optional[str]:
    if value is None or os.path.isabs(value):
        return value
    return os.path.normpath(os.path.join(base_dir, value))


def _is_int(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _check_type(key: str, value):
    if key in INT_KEYS and not _is_int(value):
        raise ConfigError(f"'{key}' must be an integer, got {value!r}")
    if key in FLOAT_KEYS and not (_is_int(value) or isinstance(value, float)):
        raise ConfigError(f"'{key}' must be a number, got {value!r}")
    if key in BOOL_KEYS and not isinstance(value, bool):
        raise ConfigError(f"'{key}' must be true or false, got {value!r}")
    if key in STR_KEYS and not isinstance(value, str):
        raise ConfigError(f"'{key}' must be a string, got {value!r}")
    if key in INT_LIST_KEYS + STR_LIST_KEYS:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"'{key}' must be a list")
        check = _is_int if key in INT_LIST_KEYS else (lambda item: isinstance(item, str))
        bad = [item for item in value if not check(item)]
        if bad:
            kind = "integers" if key in INT_LIST_KEYS else "strings"
            raise ConfigError(f"'{key}' must be a list of {kind}, got {bad[0]!r}")


def _coerce(raw: Mapping, allow_unset: bool = False) -> Dict:
    """
    Type-check config values and normalise them for RunConfig.

    With `allow_unset`, None marks a value left unset (command-line overrides).
    """
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    values = {}
    for key, value in raw.items():
        if value is None:
            if not (allow_unset or key in OPTIONAL_KEYS):
                raise ConfigError(f"'{key}' must not be null")
            values[key] = None
            continue
        _check_type(key, value)
        if key in FLOAT_KEYS:
            value = float(value)
        elif key in INT_LIST_KEYS + STR_LIST_KEYS:
            value = tuple(value)
        values[key] = value
    return values


def load_config(path: Optional[str] = None, overrides: Optional[Mapping] = None) -> RunConfig:
    """
    Read the JSON config (paths relative to its directory) and apply overrides.

    Overrides are already-typed values from the command line; None means unset.
    """
    values: Dict = {}
    base_dir = os.getcwd()
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        base_dir = os.path.dirname(os.path.abspath(path))
        with open(path, "r", encoding="utf-8") as f:
            try:
                raw = json.load(f)
            except json.JSONDecodeError as e:
                raise ConfigError(f"{path}:{e.lineno}: invalid JSON ({e.msg})")
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        values = _coerce(raw)
        for key in PATH_KEYS + ("out",):
            if key in values:
                values[key] = _resolve(base_dir, values[key])
        if "annotators" in values:
            values["annotators"] = tuple(_resolve(base_dir, p) for p in values["annotators"])

    config = RunConfig(**values)
    if overrides:
        applied = {k: v for k, v in _coerce(overrides, allow_unset=True).items() if v is not None}
        config = replace(config, **applied)
    logger.debug("Resolved config: %s", config)
    return config


def _check_path(config: RunConfig, key: str):
    value = getattr(config, key)
    if not value:
        raise ConfigError(f"'{key}' is required for this command")
    if not os.path.exists(value):
        raise ConfigError(f"'{key}' path does not exist: {value}")


def validate(config: RunConfig, command: str) -> RunConfig:
    """Check the config for one command; raises ConfigError naming the offending key"""
    if command not in REQUIRED_PATHS:
        raise ConfigError(f"unknown command {command!r}")
    for key in REQUIRED_PATHS[command]:
        _check_path(config, key)
    for key in PATH_KEYS:
        if key not in REQUIRED_PATHS[command] and getattr(config, key) and not os.path.exists(getattr(config, key)):
            raise ConfigError(f"'{key}' path does not exist: {getattr(config, key)}")

    if command in ("event-study", "regress"):
        if config.model not in NORMAL_MODELS:
            raise ConfigError(f"'model' must be one of {', '.join(NORMAL_MODELS)}, got {config.model!r}")
        if config.model == "fama_french" and not (command == "regress" and config.cars):
            _check_path(config, "factors")
        if config.model == "market" and not config.market_instrument:
            raise ConfigError("'market_instrument' is required for the market model")
        if not config.windows or any(w < 0 for w in config.windows):
            raise ConfigError("'windows' must be a non-empty list of non-negative half-widths")
        if not config.allow_any_windows and not set(config.windows) <= ALLOWED_WINDOWS:
            raise ConfigError(f"'windows' must be a subset of {sorted(ALLOWED_WINDOWS)} "
                              f"unless 'allow_any_windows' is set")
        if config.estimation_length < MIN_ESTIMATION_LENGTH:
            raise ConfigError(f"'estimation_length' must be at least {MIN_ESTIMATION_LENGTH}")
        if not (config.calendar or config.market_instrument):
            raise ConfigError("either 'calendar' or 'market_instrument' must define the trading calendar")

    if command == "regress":
        if config.ridge_lambda < 0:
            raise ConfigError("'ridge_lambda' must be non-negative")
        if config.resamples < 1:
            raise ConfigError("'resamples' must be at least 1")
        unknown = [m for m in config.regression_models if m not in REGRESSION_MODELS]
        if unknown:
            raise ConfigError(f"unknown regression models {unknown}")
        if config.industry_baseline is not None and config.industry_baseline not in {i.value for i in Industry}:
            raise ConfigError(f"unknown industry baseline {config.industry_baseline!r}")

    if command.startswith("classify"):
        if config.task not in TASKS:
            raise ConfigError(f"'task' must be one of {', '.join(TASKS)}")
        if command == "classify-kappa":
            if len(config.annotators) < 2:
                raise ConfigError("'annotators' needs at least two label files")
            for p in config.annotators:
                if not os.path.exists(p):
                    raise ConfigError(f"annotator file does not exist: {p}")
        if config.epochs < 1 or config.learning_rate <= 0 or config.l2 < 0:
            raise ConfigError("'epochs', 'learning_rate' and 'l2' must be positive (l2 may be zero)")

    if config.n_jobs == 0:
        raise ConfigError("'n_jobs' must be non-zero")
    return config
