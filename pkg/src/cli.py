"""
Command-line entry point: returns, event-study, regress, classify and sample-data
"""
import argparse
import logging
import os
import sys
from typing import Dict, List, Optional, Sequence, Tuple

import pandas as pd

from config.settings import RunConfig, load_config, log_level, validate
from config.taxonomy import INDUSTRY_NAMES, NORMAL_MODELS, Industry
from src.classifier import (
    TASK_LABELS,
    MaxEntHyperparams,
    cohens_kappa,
    evaluate_documents,
    load_model,
    mean_pairwise_kappa,
    save_model,
    split_documents,
    split_statistics,
    train_from_documents,
)
from src.errors import ConfigError, DataValidationError, EventSentimentError
from src.event_study import (
    DroppedEvent,
    EventStudyInputs,
    EventStudySettings,
    compare_normal_models,
    make_event,
    run_event_study,
)
from src.export_utils import RunManifest, export_regression_pdf, write_csv
from src.loaders import (
    load_annotations,
    load_annotator_labels,
    load_calendar,
    load_corpus,
    load_events,
    load_factors,
    load_fundamentals,
    load_prices,
    load_splits,
)
from src.market_data import ReturnSeries, TradingCalendar, calendar_from_index, compute_returns
from src.regression import BootstrapConfig, RegressionSettings, derive_seed, rank_impacts, run_models
from src.sentiment_features import build_feature_vectors
from src.synthetic import write_sample_inputs

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PARTIAL = 3

# sub-seed components
BOOTSTRAP_STREAM = 1


def _dropped_records(dropped: Sequence[DroppedEvent]) -> List[Dict]:
    return [{"firm": d.firm_id, "submission_date": d.submission_date.strftime("%Y-%m-%d"), "reason": d.reason}
            for d in dropped]


def _calendar(config: RunConfig, prices) -> TradingCalendar:
    if config.calendar:
        return load_calendar(config.calendar)
    if config.market_instrument not in prices:
        raise ConfigError(f"market instrument {config.market_instrument!r} has no prices")
    return calendar_from_index(prices[config.market_instrument])


def _returns(config: RunConfig) -> Tuple[TradingCalendar, Dict[str, ReturnSeries]]:
    prices = load_prices(config.prices)
    calendar = _calendar(config, prices)
    returns = {name: compute_returns(series, config.return_method, calendar) for name, series in prices.items()}
    return calendar, returns


def _study_inputs(config: RunConfig) -> EventStudyInputs:
    calendar, returns = _returns(config)
    market = returns.get(config.market_instrument) if config.market_instrument else None
    factors = load_factors(config.factors) if config.factors else None
    return EventStudyInputs(calendar=calendar, returns=returns, events=load_events(config.events),
                            market=market, factors=factors)


def _study_settings(config: RunConfig) -> EventStudySettings:
    return EventStudySettings(model=config.model, windows=config.windows,
                              estimation_length=config.estimation_length,
                              min_observations=config.min_observations, n_jobs=config.n_jobs)


def _manifest(command: str, config: RunConfig, input_keys: Sequence[str]) -> RunManifest:
    manifest = RunManifest(command=command, config=config.snapshot())
    manifest.record_inputs({key: getattr(config, key) for key in input_keys})
    return manifest


def cmd_returns(config: RunConfig) -> int:
    validate(config, "returns")
    manifest = _manifest("returns", config, ("prices", "calendar"))
    calendar, returns = _returns(config)
    rows = []
    gaps = []
    for name, series in returns.items():
        rows.append(pd.DataFrame({"instrument": name, "date": series.dates, "return": series.returns.to_numpy()}))
        gaps.append({"instrument": name, "returns": len(series), "gaps": series.gaps})
    frame = pd.concat(rows, ignore_index=True) if rows else pd.DataFrame(columns=["instrument", "date", "return"])
    outputs = [write_csv(frame, config.out, "returns.csv"),
               write_csv(pd.DataFrame(gaps, columns=["instrument", "returns", "gaps"]), config.out, "gaps.csv")]
    manifest.record_outputs(outputs)
    manifest.write(config.out)
    print(f"✅ Returns for {len(returns)} instruments over {len(calendar)} trading days written to {config.out}")
    return EXIT_OK


def cmd_event_study(config: RunConfig, compare_models: bool = False) -> int:
    validate(config, "event-study")
    manifest = _manifest("event-study", config, ("prices", "factors", "events", "calendar"))
    inputs = _study_inputs(config)
    settings = _study_settings(config)
    result = run_event_study(inputs, settings)

    outputs = [
        write_csv(result.cars, config.out, "cars.csv"),
        write_csv(result.caars, config.out, "caar.csv"),
        write_csv(result.mean_ar, config.out, "mean_ar.csv"),
        write_csv(pd.DataFrame(_dropped_records(result.dropped), columns=["firm", "submission_date", "reason"]),
                  config.out, "dropped_events.csv"),
    ]
    if compare_models:
        by_model, correlations = compare_normal_models(inputs, settings, NORMAL_MODELS)
        outputs.append(write_csv(by_model, config.out, "caar_by_model.csv"))
        outputs.append(write_csv(correlations, config.out, "car_correlation.csv"))

    manifest.dropped_events = _dropped_records(result.dropped)
    manifest.record_outputs(outputs)
    manifest.write(config.out)
    print(f"✅ Event study ({result.model}): {len(result.events)} events, {len(result.dropped)} dropped")
    for row in result.caars.itertuples(index=False):
        print(f"   CAAR[-{row.window},{row.window}] = {row.caar:.6f} over {row.n_events} events")
    return EXIT_PARTIAL if manifest.partial else EXIT_OK


def _cars_from_file(path: str) -> Dict[int, Dict[Tuple[str, pd.Timestamp], float]]:
    frame = pd.read_csv(path, dtype={"firm": str})
    missing = [c for c in ("firm", "event_date", "window", "car") if c not in frame.columns]
    if missing:
        raise DataValidationError(f"header is missing columns {missing}", path=path, line=1)
    frame["event_date"] = pd.to_datetime(frame["event_date"], format="%Y-%m-%d")
    cars: Dict[int, Dict[Tuple[str, pd.Timestamp], float]] = {}
    for firm, date, window, car in zip(frame["firm"], frame["event_date"], frame["window"], frame["car"]):
        cars.setdefault(int(window), {})[(firm, pd.Timestamp(date))] = float(car)
    return cars


def cmd_regress(config: RunConfig, pdf: bool = False) -> int:
    validate(config, "regress")
    manifest = _manifest("regress", config, ("prices", "factors", "events", "annotations", "fundamentals",
                                              "calendar", "cars"))
    dropped: List[DroppedEvent] = []
    if config.cars:
        calendar, returns = _returns(config)
        cars = _cars_from_file(config.cars)
        events = []
        for request in load_events(config.events):
            try:
                events.append(make_event(request["firm"], request["submission_date"], calendar, config.windows,
                                         request.get("report_year")))
            except EventSentimentError as e:
                dropped.append(DroppedEvent(request["firm"], pd.Timestamp(request["submission_date"]), str(e)))
    else:
        inputs = _study_inputs(config)
        returns = inputs.returns
        study = run_event_study(inputs, _study_settings(config))
        cars = {w: study.car_lookup(w) for w in config.windows}
        events = study.events
        dropped = study.dropped

    vectors, skipped = build_feature_vectors(events, load_annotations(config.annotations),
                                             load_fundamentals(config.fundamentals), returns)
    settings = RegressionSettings(
        model_ids=config.regression_models,
        ridge_lambda=config.ridge_lambda,
        bootstrap=BootstrapConfig(resamples=config.resamples, seed=derive_seed(config.seed, BOOTSTRAP_STREAM),
                                  n_jobs=config.n_jobs),
        industry_baseline=Industry(config.industry_baseline) if config.industry_baseline else None,
    )
    results = run_models(vectors, cars, config.windows, settings)

    outputs = [write_csv(results.coefficients, config.out, "coefficients.csv"),
               write_csv(results.r_squared, config.out, "r_squared.csv")]
    for (model_id, window, estimator), cell in results.coefficients.groupby(["model", "window", "estimator"],
                                                                           sort=True):
        outputs.append(write_csv(cell, config.out, f"model{model_id}_w{window}_{estimator}.csv"))
    impacts = pd.concat([rank_impacts(results.coefficients, w).assign(window=w) for w in sorted(config.windows)],
                        ignore_index=True)
    outputs.append(write_csv(impacts, config.out, "impact_ranking.csv"))
    if pdf:
        widest = max(config.windows)
        info = {"Normal-return model": config.model, "Observations": str(len(vectors)),
                "Ridge lambda": str(config.ridge_lambda), "Bootstrap resamples": str(config.resamples),
                "Industry baseline": (f"{results.baseline.value} ({INDUSTRY_NAMES[results.baseline]})"
                                      if results.baseline else ""),
                "Seed": str(config.seed)}
        outputs.append(export_regression_pdf(results.coefficients, results.r_squared, config.out, info,
                                             impacts[impacts["window"] == widest]))

    manifest.dropped_events = _dropped_records(dropped) + [{"event": label, "reason": reason}
                                                           for label, reason in skipped]
    manifest.dropped_rows = results.dropped_rows
    manifest.failures = results.failures
    manifest.record_outputs(outputs)
    manifest.write(config.out)
    print(f"✅ Regressions on {len(vectors)} events: {len(results.coefficients)} coefficient rows, "
          f"{len(results.failures)} failed cells")
    return EXIT_PARTIAL if manifest.partial else EXIT_OK


def _hyperparams(config: RunConfig) -> MaxEntHyperparams:
    return MaxEntHyperparams(learning_rate=config.learning_rate, l2=config.l2, epochs=config.epochs)


def cmd_classify(config: RunConfig, action: str) -> int:
    validate(config, f"classify-{action}")
    task = config.task
    if action == "kappa":
        manifest = RunManifest(command="classify kappa", config=config.snapshot())
        manifest.record_inputs({f"annotator_{i}": p for i, p in enumerate(config.annotators)})
        # prefixed so two files with the same basename stay distinct
        annotators = {f"{i + 1}:{os.path.basename(p)}": load_annotator_labels(p, task)
                      for i, p in enumerate(config.annotators)}
        mean_kappa, table = mean_pairwise_kappa(annotators)
        outputs = [write_csv(table, config.out, f"kappa_{task}.csv")]
        manifest.record_outputs(outputs)
        manifest.write(config.out)
        if len(config.annotators) == 2:
            names = list(annotators)
            shared = sorted(set(annotators[names[0]]) & set(annotators[names[1]]))
            result = cohens_kappa([annotators[names[0]][i] for i in shared],
                                  [annotators[names[1]][i] for i in shared])
            print(f"✅ Cohen's kappa ({task}) = {result.kappa:.4f} ({result.agreement}) on {result.n} items")
        else:
            print(f"✅ Mean pairwise kappa ({task}) = {mean_kappa:.4f} over {len(table)} pairs")
        return EXIT_OK

    manifest = _manifest(f"classify {action}", config, ("corpus", "splits", "model_file"))
    documents = load_corpus(config.corpus)
    splits = load_splits(config.splits)
    parts = split_documents(documents, splits)

    if action == "stats":
        outputs = [write_csv(split_statistics(documents, splits, task), config.out, f"split_stats_{task}.csv")]
        print(f"✅ Label statistics for {len(parts)} splits written to {config.out}")
    elif action == "train":
        if "train" not in parts:
            raise ConfigError("split manifest has no 'train' split")
        model = train_from_documents(parts["train"], task, min_df=config.min_df, hyperparams=_hyperparams(config))
        os.makedirs(config.out, exist_ok=True)
        path = os.path.join(config.out, f"maxent_{task}.json")
        save_model(model, path)
        outputs = [path]
        print(f"✅ MaxEnt ({task}) trained on {len(parts['train'])} documents, "
              f"vocabulary {model.vocabulary.size}, final loss {model.loss_history[-1]:.4f}")
    else:
        if config.split not in parts:
            raise ConfigError(f"split manifest has no {config.split!r} split")
        model = load_model(config.model_file)
        if model.classes != TASK_LABELS[task]:
            raise ConfigError(f"model file was trained for a different task than {task!r}")
        report = evaluate_documents(model, parts[config.split], task)
        table = pd.concat([report.per_class, report.summary_rows()], ignore_index=True)
        outputs = [write_csv(table, config.out, f"eval_{task}_{config.split}.csv"),
                   write_csv(report.confusion.rename_axis("gold").reset_index(), config.out,
                             f"confusion_{task}_{config.split}.csv")]
        print(f"✅ {task} on {config.split}: accuracy {report.accuracy:.4f}, macro F1 {report.macro_f1:.4f}")

    manifest.record_outputs(outputs)
    manifest.write(config.out)
    return EXIT_OK


def cmd_sample_data(out: str, seed: int) -> int:
    paths = write_sample_inputs(out, seed=seed)
    print(f"✅ Sample inputs written to {out}; run with --config {paths['config']}")
    return EXIT_OK


def _windows(text: str) -> Tuple[int, ...]:
    try:
        return tuple(int(w) for w in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"windows must be comma-separated integers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eventsent",
                                     description="Event studies of annual-report releases and sentiment regressions")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--jobs", type=int, dest="n_jobs")

    study = argparse.ArgumentParser(add_help=False)
    study.add_argument("--windows", type=_windows, help="event-window half-widths, e.g. 1,3,5")
    study.add_argument("--model", choices=NORMAL_MODELS)
    study.add_argument("--estimation-length", type=int, dest="estimation_length")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("returns", parents=[common], help="daily returns and gap report")
    es = sub.add_parser("event-study", parents=[common, study], help="CARs and CAARs")
    es.add_argument("--compare-models", action="store_true", help="also run every normal-return model")
    rg = sub.add_parser("regress", parents=[common, study], help="OLS and ridge regressions of CARs")
    rg.add_argument("--lambda", type=float, dest="ridge_lambda")
    rg.add_argument("--resamples", type=int)
    rg.add_argument("--pdf", action="store_true", help="also write regression_report.pdf")
    cl = sub.add_parser("classify", parents=[common], help="MaxEnt baseline and annotator agreement")
    cl.add_argument("action", choices=("train", "eval", "kappa", "stats"))
    cl.add_argument("--task", choices=tuple(TASK_LABELS))
    cl.add_argument("--split")
    cl.add_argument("--model-file", dest="model_file")
    sd = sub.add_parser("sample-data", help="write a synthetic input set and config")
    sd.add_argument("--out", default="sample_data")
    sd.add_argument("--seed", type=int, default=0)
    return parser


OVERRIDE_KEYS = ("seed", "out", "n_jobs", "windows", "model", "estimation_length", "ridge_lambda", "resamples",
                 "task", "split", "model_file")


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=log_level(), format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "sample-data":
            return cmd_sample_data(args.out, args.seed)
        overrides = {k: getattr(args, k) for k in OVERRIDE_KEYS if hasattr(args, k)}
        if overrides.get("out") is not None:
            overrides["out"] = os.path.abspath(overrides["out"])
        config = load_config(args.config, overrides)
        if args.command == "returns":
            return cmd_returns(config)
        if args.command == "event-study":
            return cmd_event_study(config, compare_models=args.compare_models)
        if args.command == "regress":
            return cmd_regress(config, pdf=args.pdf)
        return cmd_classify(config, args.action)
    except (ConfigError, DataValidationError) as e:
        logger.error("%s", e)
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_CONFIG
    except EventSentimentError as e:
        logger.error("%s", e)
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_PARTIAL
