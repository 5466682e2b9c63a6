import json
import os

import numpy as np
import pandas as pd

from src.export_utils import MANIFEST_NAME, RunManifest, export_regression_pdf, sha256_file, verify_manifest, write_csv


def coefficient_frame():
    rows = []
    for window in (1, 3):
        for estimator in ("ols", "ridge"):
            for term, coefficient in (("const", 0.001), ("Profit/Loss.negative", -0.004), ("Brand.positive", 0.002)):
                rows.append({"model": 1, "term": term, "window": window, "estimator": estimator,
                             "coefficient": coefficient, "std_error": 0.001, "flag": "**" if coefficient < 0 else "",
                             "ci_low": np.nan, "ci_high": np.nan, "pct_flag": ""})
    return pd.DataFrame(rows)


class TestWriteCsv:
    def test_dates_and_line_endings(self, tmp_path):
        frame = pd.DataFrame({"date": pd.to_datetime(["2021-03-01"]), "value": [1.5]})
        path = write_csv(frame, str(tmp_path / "nested"), "table.csv")
        assert open(path, "rb").read() == b"date,value\n2021-03-01,1.5\n"


class TestRunManifest:
    def test_checksums_and_partial_flag(self, tmp_path):
        source = tmp_path / "prices.csv"
        source.write_text("firm,date,close\n", encoding="utf-8")
        output = write_csv(pd.DataFrame({"a": [1]}), str(tmp_path), "out.csv")
        manifest = RunManifest(command="returns", config={"seed": 1})
        manifest.record_inputs({"prices": str(source), "factors": None})
        manifest.record_outputs([output])
        assert not manifest.partial
        path = manifest.write(str(tmp_path))

        with open(path, "r", encoding="utf-8") as f:
            payload = json.load(f)
        assert payload["inputs"] == {"prices": sha256_file(str(source))}
        assert payload["outputs"] == {"out.csv": sha256_file(output)}
        assert payload["finished_at"] is not None
        assert not [n for n in os.listdir(tmp_path) if n.startswith(".tmp-")]

        assert verify_manifest(path, {"prices": str(source)}) == {"prices": True}
        source.write_text("firm,date,close\nAAA,2021-01-04,1\n", encoding="utf-8")
        assert verify_manifest(path, {"prices": str(source)}) == {"prices": False}

    def test_dropped_events_mark_partial(self):
        manifest = RunManifest(command="event-study", config={})
        manifest.dropped_events.append({"firm": "AAA", "reason": "no price data"})
        assert manifest.partial

    def test_manifest_name(self, tmp_path):
        RunManifest(command="regress", config={}).write(str(tmp_path))
        assert (tmp_path / MANIFEST_NAME).exists()


class TestRegressionPdf:
    def test_report_written(self, tmp_path):
        r_squared = pd.DataFrame({"model": [1, 1], "window": [1, 3], "ols_r2": [0.12, 0.08], "ridge_r2": [0.1, np.nan]})
        impacts = pd.DataFrame({"rank": [1], "positive_impact": ["Brand.positive"], "positive_coefficient": [0.002],
                                "negative_impact": ["Profit/Loss.negative"], "negative_coefficient": [-0.004]})
        path = export_regression_pdf(coefficient_frame(), r_squared, str(tmp_path), {"Seed": "0"}, impacts)
        assert os.path.basename(path) == "regression_report.pdf"
        assert open(path, "rb").read(4) == b"%PDF"

    def test_same_inputs_same_bytes(self, tmp_path):
        r_squared = pd.DataFrame({"model": [1], "window": [1], "ols_r2": [0.12], "ridge_r2": [0.1]})
        first = export_regression_pdf(coefficient_frame(), r_squared, str(tmp_path / "a"))
        second = export_regression_pdf(coefficient_frame(), r_squared, str(tmp_path / "b"))
        assert open(first, "rb").read() == open(second, "rb").read()
