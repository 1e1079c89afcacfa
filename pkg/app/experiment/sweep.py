"""Symmetric and asymmetric modality-dropout sweeps over cached base outputs."""

import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from app.experiment.artifacts import BaseArtifacts
from app.experiment.config import ExperimentConfig
from app.experiment.pipeline import fit_meta, load_artifacts, meta_rows, stage
from app.experiment.report import ExperimentReport
from app.fusion.dropout import DropoutPolicy
from app.schema import HeatmapCellTD, MetricRowTD
from app.utils import derive_seed, format_rate

logger = logging.getLogger(__name__)

SWEEP_METRICS = ("accuracy", "qwk")


def cell_seed(master: int, p_tab: float, p_text: float) -> int:
    return derive_seed(master, p_tab, p_text)


def dropout_policy(master: int, p_tab: float, p_text: float) -> DropoutPolicy:
    """Policy for one grid cell; a symmetric rate p gets the same seed as cell (p, p)."""
    seed = cell_seed(master, p_tab, p_text)
    if p_tab == 0.0 and p_text == 0.0:
        return DropoutPolicy.none(seed)
    if p_tab == p_text:
        return DropoutPolicy.symmetric(p_tab, seed)
    return DropoutPolicy.asymmetric(p_tab, p_text, seed)


def dropout_label(p: float) -> str:
    return f"{format_rate(p)} Dropout"


def run_cell(
    arts: BaseArtifacts, cfg: ExperimentConfig, p_tab: float, p_text: float, label: str
) -> list[MetricRowTD]:
    meta = fit_meta(arts, cfg, dropout_policy(cfg.seed, p_tab, p_text))
    return meta_rows(label, meta, arts)


def _cells_long_form(p_tab: float, p_text: float, rows: list[MetricRowTD]) -> list[HeatmapCellTD]:
    out = []
    for r in rows:
        for metric in SWEEP_METRICS:
            out.append(
                HeatmapCellTD(p_tab=p_tab, p_text=p_text, cohort=r["cohort"], metric=metric, value=r[metric])
            )
    return out


def _map(cfg: ExperimentConfig, fn, items):
    if cfg.sweep.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.sweep.workers) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def run_dropout_sweep(cfg: ExperimentConfig, out_dir: Path, report: ExperimentReport) -> ExperimentReport:
    """Adds dropout rows, the symmetric long-form table and the asymmetric heatmap."""
    with stage("sweep"):
        arts = load_artifacts(out_dir)

        symmetric = list(cfg.sweep.symmetric)
        sym_results = _map(cfg, lambda p: run_cell(arts, cfg, p, p, dropout_label(p)), symmetric)

        rates = cfg.asymmetric_rates()
        grid = [(pt, px) for pt in rates for px in rates]

        def asym(cell):
            pt, px = cell
            logger.debug("cell p_tab=%.2f p_text=%.2f", pt, px)
            return run_cell(arts, cfg, pt, px, f"{pt:g}/{px:g}")

        grid_results = _map(cfg, asym, grid)

    report.symmetric = [c for p, rows in zip(symmetric, sym_results) for c in _cells_long_form(p, p, rows)]
    report.heatmap = [c for (pt, px), rows in zip(grid, grid_results) for c in _cells_long_form(pt, px, rows)]
    report.replace_rows([r for p, rows in zip(symmetric, sym_results) if p > 0 for r in rows])
    report.seeds["dropout_cells"] = {
        f"{pt:g},{px:g}": cell_seed(cfg.seed, pt, px)
        for pt, px in sorted(set(grid) | {(p, p) for p in symmetric})
    }
    logger.info("dropout sweep: %d symmetric rates, %d grid cells", len(symmetric), len(grid))
    return report

