"""
Export utilities for study outputs (CSV tables, JSON run manifests and the PDF regression report)
"""
import hashlib
import json
import logging
import os
import tempfile
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Dict, List, Mapping, Optional, Sequence

import pandas as pd
from reportlab.lib import colors
from reportlab.lib.pagesizes import A4, landscape
from reportlab.lib.styles import ParagraphStyle, getSampleStyleSheet
from reportlab.lib.units import inch
from reportlab.platypus import PageBreak, Paragraph, SimpleDocTemplate, Spacer, Table, TableStyle

from src import __version__

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
DATE_FORMAT = "%Y-%m-%d"


def sha256_file(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_csv(frame: pd.DataFrame, out_dir: str, name: str) -> str:
    """Write a table with fixed line endings and date format so reruns are byte-identical"""
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, name)
    frame.to_csv(path, index=False, lineterminator="\n", date_format=DATE_FORMAT)
    logger.info("Wrote %s (%d rows)", path, len(frame))
    return path


def _atomic_write_text(path: str, text: str):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".json")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


@dataclass
class RunManifest:
    command: str
    config: Dict
    inputs: Dict[str, str] = field(default_factory=dict)
    outputs: Dict[str, str] = field(default_factory=dict)
    dropped_events: List[Dict] = field(default_factory=list)
    dropped_rows: Dict[str, int] = field(default_factory=dict)
    failures: List[Dict] = field(default_factory=list)
    started_at: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat(timespec="seconds"))
    finished_at: Optional[str] = None
    version: str = __version__

    def record_inputs(self, paths: Mapping[str, Optional[str]]):
        for name, path in paths.items():
            if path:
                self.inputs[name] = sha256_file(path)

    def record_outputs(self, paths: Sequence[str]):
        for path in paths:
            self.outputs[os.path.basename(path)] = sha256_file(path)

    @property
    def partial(self) -> bool:
        return bool(self.dropped_events or self.failures)

    def write(self, out_dir: str) -> str:
        """Written last and atomically; an existing manifest means the run completed"""
        self.finished_at = datetime.now(timezone.utc).isoformat(timespec="seconds")
        os.makedirs(out_dir, exist_ok=True)
        path = os.path.join(out_dir, MANIFEST_NAME)
        payload = {
            "command": self.command,
            "version": self.version,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "config": self.config,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "dropped_events": self.dropped_events,
            "dropped_rows": self.dropped_rows,
            "failures": self.failures,
        }
        _atomic_write_text(path, json.dumps(payload, indent=2, ensure_ascii=False, sort_keys=True, default=str))
        logger.info("Wrote manifest %s", path)
        return path


def verify_manifest(manifest_path: str, input_paths: Mapping[str, str]) -> Dict[str, bool]:
    """Which recorded input checksums still match the files on disk"""
    with open(manifest_path, "r", encoding="utf-8") as f:
        recorded = json.load(f)["inputs"]
    return {name: recorded.get(name) == sha256_file(path) for name, path in input_paths.items()}


class RegressionReportExporter:
    def __init__(self):
        self.styles = getSampleStyleSheet()
        self.setup_custom_styles()

    def setup_custom_styles(self):
        self.styles.add(ParagraphStyle(
            name='ReportTitle',
            parent=self.styles['Heading1'],
            fontSize=16,
            spaceAfter=20,
            alignment=1,
            textColor=colors.darkblue
        ))

        self.styles.add(ParagraphStyle(
            name='ReportSubtitle',
            parent=self.styles['Heading2'],
            fontSize=12,
            spaceAfter=12,
            textColor=colors.darkblue
        ))

        self.styles.add(ParagraphStyle(
            name='ReportNote',
            parent=self.styles['Normal'],
            fontSize=8,
            spaceAfter=6,
            textColor=colors.grey
        ))

    def _grid_style(self) -> TableStyle:
        return TableStyle([
            ('BACKGROUND', (0, 0), (-1, 0), colors.grey),
            ('TEXTCOLOR', (0, 0), (-1, 0), colors.whitesmoke),
            ('ALIGN', (1, 0), (-1, -1), 'RIGHT'),
            ('FONTNAME', (0, 0), (-1, 0), 'Helvetica-Bold'),
            ('FONTSIZE', (0, 0), (-1, -1), 7),
            ('ROWBACKGROUNDS', (0, 1), (-1, -1), [colors.beige, colors.white]),
            ('GRID', (0, 0), (-1, -1), 0.5, colors.black)
        ])

    def _coefficient_table(self, coefficients: pd.DataFrame, model_id: int, estimator: str,
                           windows: Sequence[int]) -> Optional[Table]:
        cell = coefficients[(coefficients["model"] == model_id) & (coefficients["estimator"] == estimator)]
        if cell.empty:
            return None
        header = ["Term"] + [f"[-{w},{w}]" for w in windows]
        data = [header]
        for term in dict.fromkeys(cell["term"]):
            row = [term]
            for w in windows:
                hit = cell[(cell["term"] == term) & (cell["window"] == w)]
                if hit.empty:
                    row.append("")
                    continue
                r = hit.iloc[0]
                row.append(f"{r['coefficient']:.4f}{r['flag']} ({r['std_error']:.4f})")
            data.append(row)
        table = Table(data, colWidths=[2.2 * inch] + [1.8 * inch] * len(windows), repeatRows=1)
        table.setStyle(self._grid_style())
        return table

    def export_regression_report(self, coefficients: pd.DataFrame, r_squared: pd.DataFrame, out_dir: str,
                                 info: Optional[Mapping[str, str]] = None,
                                 impacts: Optional[pd.DataFrame] = None) -> str:
        """One page per (model, estimator) table, then the r-squared grid and impact ranking"""
        os.makedirs(out_dir, exist_ok=True)
        filename = os.path.join(out_dir, "regression_report.pdf")
        doc = SimpleDocTemplate(filename, pagesize=landscape(A4),
                                rightMargin=0.5 * inch, leftMargin=0.5 * inch,
                                topMargin=0.6 * inch, bottomMargin=0.6 * inch,
                                invariant=1)
        windows = sorted(int(w) for w in coefficients["window"].unique()) if len(coefficients) else []

        story = [Paragraph("CAR Regressions on Report Sentiment", self.styles['ReportTitle'])]
        if info:
            info_table = Table([[f"{k}:", str(v)] for k, v in info.items()], colWidths=[2 * inch, 5 * inch])
            info_table.setStyle(TableStyle([
                ('ALIGN', (0, 0), (-1, -1), 'LEFT'),
                ('FONTNAME', (0, 0), (0, -1), 'Helvetica-Bold'),
                ('FONTSIZE', (0, 0), (-1, -1), 10),
                ('BOTTOMPADDING', (0, 0), (-1, -1), 6),
            ]))
            story.append(info_table)
        story.append(Paragraph("Coefficients with standard errors in parentheses. "
                               "** significant at 1%, * at 5%.", self.styles['ReportNote']))

        for model_id in sorted(coefficients["model"].unique()) if len(coefficients) else []:
            for estimator in ("ols", "ridge"):
                table = self._coefficient_table(coefficients, int(model_id), estimator, windows)
                if table is None:
                    continue
                story.append(PageBreak())
                story.append(Paragraph(f"Model {int(model_id)} ({estimator.upper()})", self.styles['ReportSubtitle']))
                story.append(table)

        story.append(PageBreak())
        story.append(Paragraph("Coefficient of determination", self.styles['ReportSubtitle']))
        r2_data = [["Model", "Window", "OLS r2", "Ridge r2"]]
        for row in r_squared.itertuples(index=False):
            r2_data.append([str(row.model), f"[-{row.window},{row.window}]",
                            "" if pd.isna(row.ols_r2) else f"{row.ols_r2:.4f}",
                            "" if pd.isna(row.ridge_r2) else f"{row.ridge_r2:.4f}"])
        r2_table = Table(r2_data, colWidths=[1 * inch, 1.2 * inch, 1.2 * inch, 1.2 * inch])
        r2_table.setStyle(self._grid_style())
        story.append(r2_table)

        if impacts is not None and not impacts.empty:
            story.append(Spacer(1, 0.3 * inch))
            story.append(Paragraph("Largest significant impacts", self.styles['ReportSubtitle']))
            impact_data = [["Rank", "Positive", "Coefficient", "Negative", "Coefficient"]]
            for row in impacts.itertuples(index=False):
                impact_data.append([str(row.rank), row.positive_impact,
                                    "" if pd.isna(row.positive_coefficient) else f"{row.positive_coefficient:.4f}",
                                    row.negative_impact,
                                    "" if pd.isna(row.negative_coefficient) else f"{row.negative_coefficient:.4f}"])
            impact_table = Table(impact_data, colWidths=[0.6 * inch, 2.4 * inch, 1.1 * inch, 2.4 * inch, 1.1 * inch])
            impact_table.setStyle(self._grid_style())
            story.append(impact_table)

        doc.build(story)
        logger.info("Regression report exported to PDF: %s", filename)
        return filename


def export_regression_pdf(coefficients: pd.DataFrame, r_squared: pd.DataFrame, out_dir: str,
                          info: Optional[Mapping[str, str]] = None, impacts: Optional[pd.DataFrame] = None) -> str:
    return RegressionReportExporter().export_regression_report(coefficients, r_squared, out_dir, info, impacts)
