import json
import os
import shutil

import pandas as pd
import pytest

from config.taxonomy import aspect_sentiment_keys
from src.cli import EXIT_CONFIG, EXIT_OK, main
from src.export_utils import MANIFEST_NAME, verify_manifest


def run(sample_inputs, out, *args):
    return main([*args, "--config", sample_inputs["config"], "--out", str(out)])


def read_manifest(out):
    with open(os.path.join(str(out), MANIFEST_NAME), "r", encoding="utf-8") as f:
        return json.load(f)


class TestSampleData:
    def test_writes_config_and_inputs(self, tmp_path):
        assert main(["sample-data", "--out", str(tmp_path), "--seed", "3"]) == EXIT_OK
        with open(tmp_path / "config.json", "r", encoding="utf-8") as f:
            config = json.load(f)
        assert config["seed"] == 3
        for name in ("prices", "factors", "events", "annotations", "fundamentals", "corpus", "splits", "calendar"):
            assert (tmp_path / config[name]).exists()


class TestReturnsAndEventStudy:
    def test_returns(self, sample_inputs, tmp_path):
        assert run(sample_inputs, tmp_path, "returns") == EXIT_OK
        gaps = pd.read_csv(tmp_path / "gaps.csv")
        assert "SET" in set(gaps["instrument"])

    def test_event_study_outputs_and_manifest(self, sample_inputs, tmp_path):
        assert run(sample_inputs, tmp_path, "event-study") == EXIT_OK
        caar = pd.read_csv(tmp_path / "caar.csv")
        assert list(caar["window"]) == [1, 3, 5]
        cars = pd.read_csv(tmp_path / "cars.csv")
        assert len(cars) == 3 * caar["n_events"].iloc[0]
        manifest = read_manifest(tmp_path)
        assert set(manifest["outputs"]) >= {"cars.csv", "caar.csv", "mean_ar.csv", "dropped_events.csv"}
        assert manifest["config"]["seed"] == 7
        checks = verify_manifest(str(tmp_path / MANIFEST_NAME),
                                 {k: sample_inputs[k] for k in ("prices", "factors", "events", "calendar")})
        assert all(checks.values())

    def test_compare_models(self, sample_inputs, tmp_path):
        assert run(sample_inputs, tmp_path, "event-study", "--compare-models", "--windows", "1") == EXIT_OK
        by_model = pd.read_csv(tmp_path / "caar_by_model.csv")
        assert set(by_model["model"]) == {"constant_mean", "market", "fama_french"}

    def test_missing_factors_is_config_error(self, sample_inputs, tmp_path):
        source = os.path.dirname(sample_inputs["config"])
        copy = tmp_path / "inputs"
        shutil.copytree(source, copy)
        os.remove(copy / "factors.csv")
        code = main(["event-study", "--config", str(copy / "config.json"), "--out", str(tmp_path / "out")])
        assert code == EXIT_CONFIG
        assert not (tmp_path / "out" / MANIFEST_NAME).exists()

    def test_window_outside_default_set(self, sample_inputs, tmp_path):
        assert run(sample_inputs, tmp_path, "event-study", "--windows", "2") == EXIT_CONFIG


def rewrite_config(sample_inputs, tmp_path, **changes):
    """Copy of the sample config with absolute input paths and some keys replaced"""
    base = os.path.dirname(sample_inputs["config"])
    with open(sample_inputs["config"], "r", encoding="utf-8") as f:
        config = json.load(f)
    config = {k: os.path.join(base, v) if k in ("prices", "factors", "events", "annotations", "fundamentals",
                                                  "corpus", "splits", "calendar") else v
              for k, v in config.items()}
    config["annotators"] = [os.path.join(base, p) for p in config["annotators"]]
    config.update(changes)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config), encoding="utf-8")
    return str(path)


class TestConfigTypes:
    @pytest.mark.parametrize("command,changes", [
        ("event-study", {"windows": [1, 3, "5"]}),
        ("regress", {"resamples": "200"}),
    ])
    def test_mistyped_value_is_config_error(self, sample_inputs, tmp_path, command, changes):
        path = rewrite_config(sample_inputs, tmp_path, **changes)
        code = main([command, "--config", path, "--out", str(tmp_path / "out")])
        assert code == EXIT_CONFIG
        assert not (tmp_path / "out" / MANIFEST_NAME).exists()


class TestRegress:
    @pytest.fixture(scope="class")
    def regress_runs(self, sample_inputs, tmp_path_factory):
        outs = [tmp_path_factory.mktemp(f"regress{i}") for i in range(2)]
        codes = [run(sample_inputs, out, "regress", "--resamples", "40") for out in outs]
        return codes, outs

    def test_exit_code(self, regress_runs):
        codes, _ = regress_runs
        assert codes == [EXIT_OK, EXIT_OK]

    def test_byte_identical_reruns(self, regress_runs):
        _, (first, second) = regress_runs
        names = sorted(n for n in os.listdir(first) if n.endswith(".csv"))
        assert names == sorted(n for n in os.listdir(second) if n.endswith(".csv"))
        for name in names:
            assert (first / name).read_bytes() == (second / name).read_bytes(), name

    def test_tables(self, regress_runs):
        _, (out, _) = regress_runs
        coefficients = pd.read_csv(out / "coefficients.csv")
        cell = coefficients[(coefficients["model"] == 5) & (coefficients["window"] == 3)
                            & (coefficients["estimator"] == "ridge")]
        assert len(cell) == 61
        assert len(set(cell["term"]) & set(aspect_sentiment_keys())) == 48
        r_squared = pd.read_csv(out / "r_squared.csv")
        assert len(r_squared) == 15 and set(r_squared["window"]) == {1, 3, 5}
        assert (out / "model5_w5_ols.csv").exists()
        impacts = pd.read_csv(out / "impact_ranking.csv")
        assert set(impacts["window"]) == {1, 3, 5}

    def test_pdf_report(self, sample_inputs, tmp_path):
        code = run(sample_inputs, tmp_path, "regress", "--resamples", "20", "--windows", "1", "--pdf")
        assert code == EXIT_OK
        assert (tmp_path / "regression_report.pdf").read_bytes().startswith(b"%PDF")
        assert "regression_report.pdf" in read_manifest(tmp_path)["outputs"]

    def test_from_cars_file(self, sample_inputs, tmp_path):
        study = tmp_path / "study"
        assert run(sample_inputs, study, "event-study") == EXIT_OK
        path = rewrite_config(sample_inputs, tmp_path, cars=str(study / "cars.csv"), annotators=[])
        code = main(["regress", "--config", path, "--out", str(tmp_path / "out"), "--resamples", "20"])
        assert code == EXIT_OK
        assert (tmp_path / "out" / "coefficients.csv").exists()


class TestClassify:
    def test_train_then_eval(self, sample_inputs, tmp_path):
        assert run(sample_inputs, tmp_path, "classify", "train", "--task", "aspect") == EXIT_OK
        model_file = tmp_path / "maxent_aspect.json"
        assert model_file.exists()
        code = run(sample_inputs, tmp_path, "classify", "eval", "--task", "aspect", "--split", "test",
                   "--model-file", str(model_file))
        assert code == EXIT_OK
        report = pd.read_csv(tmp_path / "eval_aspect_test.csv")
        accuracy = report.loc[report["label"] == "accuracy", "f1"].iloc[0]
        assert accuracy > 0.6
        confusion = pd.read_csv(tmp_path / "confusion_aspect_test.csv")
        assert confusion.shape == (16, 17)

    def test_model_for_other_task_rejected(self, sample_inputs, tmp_path):
        assert run(sample_inputs, tmp_path, "classify", "train", "--task", "sentiment") == EXIT_OK
        code = run(sample_inputs, tmp_path, "classify", "eval", "--task", "aspect",
                   "--model-file", str(tmp_path / "maxent_sentiment.json"))
        assert code == EXIT_CONFIG

    def test_stats(self, sample_inputs, tmp_path):
        assert run(sample_inputs, tmp_path, "classify", "stats", "--task", "sentiment") == EXIT_OK
        stats = pd.read_csv(tmp_path / "split_stats_sentiment.csv")
        assert set(stats["split"]) == {"train", "dev", "test"}
        assert stats.groupby("split")["percent"].sum().round(6).eq(100.0).all()

    def test_kappa(self, sample_inputs, tmp_path):
        assert run(sample_inputs, tmp_path, "classify", "kappa", "--task", "aspect") == EXIT_OK
        table = pd.read_csv(tmp_path / "kappa_aspect.csv")
        assert len(table) == 1
        assert 0.5 < table["kappa"].iloc[0] < 1.0

    def test_identical_annotators(self, sample_inputs, tmp_path):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"annotators": [sample_inputs["annotator_a"], sample_inputs["annotator_a"]]}),
                          encoding="utf-8")
        code = main(["classify", "kappa", "--task", "aspect", "--config", str(config), "--out", str(tmp_path)])
        assert code == EXIT_OK
        assert pd.read_csv(tmp_path / "kappa_aspect.csv")["kappa"].iloc[0] == 1.0

    def test_overlapping_splits(self, sample_inputs, tmp_path):
        with open(sample_inputs["splits"], "r", encoding="utf-8") as f:
            splits = json.load(f)
        splits["test"].append(splits["train"][0])
        leaky = tmp_path / "splits.json"
        leaky.write_text(json.dumps(splits), encoding="utf-8")
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"corpus": sample_inputs["corpus"], "splits": str(leaky)}), encoding="utf-8")
        code = main(["classify", "stats", "--config", str(config), "--out", str(tmp_path / "out")])
        assert code == EXIT_CONFIG
