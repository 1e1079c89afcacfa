import logging
from pathlib import Path

import numpy as np

from app.constants import AGE_BRACKETS
from app.experiment.config import ExperimentConfig
from app.experiment.pipeline import fit_meta, load_artifacts, stage
from app.experiment.report import ExperimentReport
from app.experiment.sweep import dropout_policy
from app.fusion.stacking import AblationMode, StackedFeatures, ablate
from app.schema import StrataRowTD

logger = logging.getLogger(__name__)

OVERALL = "All Pediatric"
MASK_KEYS = {
    AblationMode.BOTH_INTACT: "both_intact",
    AblationMode.NO_TABULAR: "no_tabular",
    AblationMode.NO_TEXT: "no_text",
}


def bracket_rows(
    meta, stacked: StackedFeatures, labels: np.ndarray, ages: np.ndarray, brackets=AGE_BRACKETS
) -> list[StrataRowTD]:
    """Accuracy per age bracket under each zero-mask, plus an overall row."""
    groups = [(name, (ages >= lo) & (ages <= hi)) for name, lo, hi in brackets]
    groups.append((OVERALL, np.ones(len(labels), dtype=bool)))

    rows = []
    for name, selected in groups:
        rows_idx = np.flatnonzero(selected)
        row = StrataRowTD(bracket=name, n=int(rows_idx.size), both_intact=None, no_tabular=None, no_text=None)
        if rows_idx.size:
            subset = stacked.take(rows_idx)
            for mode, key in MASK_KEYS.items():
                predicted = meta.predict(ablate(subset, mode).values)
                row[key] = float(np.mean(predicted == labels[rows_idx]))
        rows.append(row)
    return rows


def run_age_strata(cfg: ExperimentConfig, out_dir: Path, report: ExperimentReport) -> ExperimentReport:
    with stage("strata"):
        arts = load_artifacts(out_dir)
        p = cfg.strata.dropout
        meta = fit_meta(arts, cfg, dropout_policy(cfg.seed, p, p))
        peds = arts["pediatric"]
        if len(peds):
            report.strata = bracket_rows(meta, peds.stacked(), peds.labels, peds.ages)
        else:
            logger.warning("pediatric cohort is empty, every bracket has zero records")
            report.strata = [
                StrataRowTD(bracket=name, n=0, both_intact=None, no_tabular=None, no_text=None)
                for name, _, _ in AGE_BRACKETS + ((OVERALL, 0, 0),)
            ]
    logger.info("age strata with the %g dropout model", p)
    return report
