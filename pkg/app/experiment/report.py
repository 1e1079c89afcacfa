"""Experiment report model and the table emitters (csv, txt, tex)."""

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import pandas as pd

from app.constants import (
    ADULT_TABLE_COLUMNS,
    HEATMAP_COLUMNS,
    PEDIATRIC_TABLE_COLUMNS,
    STRATA_COLUMNS,
)
from app.errors import DataError, ReportError
from app.schema import HeatmapCellTD, MetricRowTD, StrataRowTD
from app.utils import atomic_write_text, csv_text

logger = logging.getLogger(__name__)

REPORT_FILE = "report.json"
ADULT = "adult"
PEDIATRIC = "pediatric"


@dataclass
class ExperimentReport:
    rows: list[MetricRowTD] = field(default_factory=list)
    seeds: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    cohort_sizes: dict = field(default_factory=dict)
    confusion: dict = field(default_factory=dict)
    text_selection: list[dict] = field(default_factory=list)
    symmetric: list[HeatmapCellTD] = field(default_factory=list)
    heatmap: list[HeatmapCellTD] = field(default_factory=list)
    strata: list[StrataRowTD] = field(default_factory=list)
    notices: list[str] = field(default_factory=list)

    def cohort_rows(self, cohort: str) -> list[MetricRowTD]:
        return [r for r in self.rows if r["cohort"] == cohort]

    def row(self, model: str, cohort: str) -> MetricRowTD:
        for r in self.rows:
            if r["model"] == model and r["cohort"] == cohort:
                return r
        raise KeyError(f"no row for {model} / {cohort}")

    def replace_rows(self, rows: Sequence[MetricRowTD]) -> None:
        """Add rows, replacing any existing row with the same model and cohort."""
        keys = {(r["model"], r["cohort"]) for r in rows}
        self.rows = [r for r in self.rows if (r["model"], r["cohort"]) not in keys] + list(rows)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True, ensure_ascii=False) + "\n"

    def save(self, out_dir: Path) -> None:
        atomic_write_text(Path(out_dir) / REPORT_FILE, self.to_json())

    @classmethod
    def load(cls, out_dir: Path) -> "ExperimentReport":
        path = Path(out_dir) / REPORT_FILE
        if not path.exists():
            raise DataError(f"no report found at {path}")
        with open(path, "r", encoding="utf-8") as f:
            return cls(**json.load(f))


# === Cell formatting ===


def format_value(value: Optional[float]) -> str:
    return "" if value is None else f"{value:.3f}"


ADULT_KEYS = ("training_error", "test_error", "qwk", "accuracy", "balanced_accuracy", "macro_f1")
PEDIATRIC_KEYS = ("qwk", "accuracy", "balanced_accuracy", "macro_f1")
STRATA_KEYS = ("both_intact", "no_tabular", "no_text")


def table_cells(rows: Sequence[dict], label_key: str, keys: Sequence[str]) -> list[list[str]]:
    out = []
    for r in rows:
        cells = [str(r[label_key])]
        for k in keys:
            v = r[k]
            cells.append(str(v) if isinstance(v, int) and not isinstance(v, bool) else format_value(v))
        out.append(cells)
    return out


def render_csv_table(header: Sequence[str], cells: Sequence[Sequence[str]]) -> str:
    return csv_text(pd.DataFrame([list(r) for r in cells], columns=list(header), dtype=str))


def render_txt(header: Sequence[str], cells: Sequence[Sequence[str]]) -> str:
    cells = [[c if c else "-" for c in row] for row in cells]
    widths = [max(len(row[i]) for row in [list(header)] + cells) for i in range(len(header))]

    def line(row):
        first = row[0].ljust(widths[0])
        rest = [c.rjust(w) for c, w in zip(row[1:], widths[1:])]
        return "  ".join([first] + rest).rstrip()

    rule = "-" * len(line(list(header)))
    return "\n".join([line(list(header)), rule] + [line(r) for r in cells]) + "\n"


def tex_escape(text: str) -> str:
    return text.replace("\\", "\\textbackslash{}").replace("%", "\\%").replace("&", "\\&")


def tex_row(cells: Sequence[str]) -> str:
    return " & ".join(tex_escape(c) if c else "-" for c in cells) + " \\\\"


def render_tex(header: Sequence[str], cells: Sequence[Sequence[str]]) -> str:
    spec = "l" + "c" * (len(header) - 1)
    lines = [
        f"\\begin{{tabular}}{{{spec}}}",
        "\\hline",
        " & ".join(f"\\textbf{{{tex_escape(h)}}}" for h in header) + " \\\\",
        "\\hline",
    ]
    lines += [tex_row(r) for r in cells]
    lines += ["\\hline", "\\end{tabular}"]
    return "\n".join(lines) + "\n"


RENDERERS: dict[str, tuple[str, Callable]] = {
    "csv": ("csv", render_csv_table),
    "txt": ("txt", render_txt),
    "tex": ("tex", render_tex),
}


def _long_form(cells: Sequence[HeatmapCellTD]) -> str:
    rows = [
        [f"{c['p_tab']:g}", f"{c['p_text']:g}", c["cohort"], c["metric"], repr(float(c["value"]))]
        for c in cells
    ]
    return render_csv_table(HEATMAP_COLUMNS, rows)


def _confusion_csv(confusion: dict) -> str:
    rows = []
    for key in sorted(confusion):
        model, cohort = key.split("|", 1)
        for t, counts in enumerate(confusion[key]):
            for p, n in enumerate(counts):
                rows.append([model, cohort, str(t + 1), str(p + 1), str(n)])
    return render_csv_table(("model", "cohort", "true_level", "pred_level", "count"), rows)


def _losses_csv(rows: Sequence[MetricRowTD]) -> str:
    seen, out = set(), []
    for r in rows:
        if r["model"] not in seen:
            seen.add(r["model"])
            out.append([r["model"], r["error_metric"]])
    return render_csv_table(("model", "error_metric"), out)


def render_report(report: ExperimentReport, formats: Sequence[str]) -> dict[str, str]:
    """File name to contents; nothing touches the disk here."""
    if not report.rows:
        raise ReportError("report has no model rows to emit")
    unknown = [f for f in formats if f not in RENDERERS]
    if unknown:
        raise ReportError(f"unknown report format(s): {', '.join(unknown)}")

    adult_cells = table_cells(report.cohort_rows(ADULT), "model", ADULT_KEYS)
    tables = [("table_adult", ADULT_TABLE_COLUMNS, adult_cells)]
    pediatric_rows = report.cohort_rows(PEDIATRIC)
    if pediatric_rows:
        tables.append(
            ("table_pediatric", PEDIATRIC_TABLE_COLUMNS, table_cells(pediatric_rows, "model", PEDIATRIC_KEYS))
        )
    if report.strata:
        tables.append(("strata", STRATA_COLUMNS, table_cells(report.strata, "bracket", ("n",) + STRATA_KEYS)))

    files = {}
    for name, header, cells in tables:
        for fmt in formats:
            ext, render = RENDERERS[fmt]
            files[f"{name}.{ext}"] = render(header, cells)

    files["losses.csv"] = _losses_csv(report.rows)
    if report.confusion:
        files["confusion.csv"] = _confusion_csv(report.confusion)
    if report.symmetric:
        files["symmetric.csv"] = _long_form(report.symmetric)
    if report.heatmap:
        files["heatmap.csv"] = _long_form(report.heatmap)
    return files


def emit_report(
    report: ExperimentReport, out_dir: Path, formats: Sequence[str] = ("csv", "txt")
) -> list[Path]:
    files = render_report(report, formats)
    out_dir = Path(out_dir)
    written = []
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        for name in sorted(files):
            atomic_write_text(out_dir / name, files[name])
            written.append(out_dir / name)
    except OSError as e:
        raise ReportError(f"cannot write report to {out_dir}: {e}") from e
    logger.info("wrote %d report files to %s", len(written), out_dir)
    return written
