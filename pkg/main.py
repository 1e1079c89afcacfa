import argparse
import logging
import sys
from pathlib import Path

from app.constants import APP_NAME, APP_VERSION, EXIT_OK
from app.errors import ConfigError, DataError, ReportError, TrainingError, TriageError
from app.experiment.config import REPORT_FORMATS, ExperimentConfig, load_config, to_yaml
from app.experiment.pipeline import ARTIFACTS_DIR, run_pipeline
from app.experiment.report import ExperimentReport, emit_report
from app.experiment.strata import run_age_strata
from app.experiment.sweep import run_dropout_sweep
from app.ingest import parse_and_clean, read_raw_csv, write_records_csv, write_rejects_csv
from app.synthgen import generate_cohort
from app.translations import DEFAULT_LANGUAGE, TRANSLATIONS, _
from app.utils import atomic_write_text, ensure_dir, resolve_output_dir

logger = logging.getLogger("triage")

RESOLVED_CONFIG = "config.resolved.yaml"
ERROR_KEYS = (
    (ConfigError, "config_error"),
    (TrainingError, "training_error"),
    (ReportError, "report_error"),
    (DataError, "data_error"),
)


def setup_logging(level: str) -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("[%(name)s] %(levelname)s: %(message)s"))
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(level.upper())


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="config file (section.key=value lines, or .yaml)")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--out", help="output directory")
    common.add_argument(
        "--format",
        action="append",
        choices=REPORT_FORMATS,
        help="report format, repeatable",
    )
    common.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="config override, repeatable",
    )
    common.add_argument("--log-level", default="INFO")
    common.add_argument("--lang", default=DEFAULT_LANGUAGE, choices=sorted(TRANSLATIONS))

    parser = argparse.ArgumentParser(prog="triage", description=f"{APP_NAME} {APP_VERSION}")
    parser.add_argument("--version", action="version", version=f"{APP_NAME} {APP_VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", parents=[common], help="generate a synthetic cohort CSV")
    synth.add_argument("--output", help="CSV path (default <out>/cohort.csv)")

    pre = sub.add_parser("preprocess", parents=[common], help="clean a raw encounter CSV")
    pre.add_argument("--input", help="raw CSV (default data.csv from the config)")

    sub.add_parser("train", parents=[common], help="base models, fusion and main tables")
    sub.add_parser("sweep", parents=[common], help="symmetric and asymmetric dropout sweeps")
    sub.add_parser("strata", parents=[common], help="age-bracket zero-mask ablation")
    sub.add_parser("report", parents=[common], help="re-emit tables from a stored report")
    return parser


def resolve_config(args) -> ExperimentConfig:
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.format:
        overrides.append(f"output.formats=[{','.join(args.format)}]")
    return load_config(args.config, overrides)


# === Subcommands ===


def cmd_synth(args, cfg: ExperimentConfig, out_dir: Path) -> None:
    records = generate_cohort(cfg.cohort_spec(), workers=cfg.synth.workers)
    path = Path(args.output) if args.output else ensure_dir(out_dir) / "cohort.csv"
    ensure_dir(path.parent)
    write_records_csv(records, path)
    n_peds = sum(r.is_pediatric for r in records)
    print(f"{_(args.lang, 'cohort_sizes')}: {len(records) - n_peds} / {n_peds}")
    print(f"{_(args.lang, 'cohort_written')} {path}")


def cmd_preprocess(args, cfg: ExperimentConfig, out_dir: Path) -> None:
    source = args.input or cfg.data.csv
    if not source:
        raise ConfigError("preprocess needs --input or data.csv")
    try:
        frame = read_raw_csv(source)
    except FileNotFoundError as e:
        raise DataError(f"input file not found: {source}") from e
    records, rejects = parse_and_clean(frame, cfg.preprocess_config())

    ensure_dir(out_dir)
    write_records_csv(records, out_dir / "cleaned.csv")
    write_rejects_csv(rejects, out_dir / "rejects.csv")
    print(f"{_(args.lang, 'records_loaded')}: {len(records)}")
    print(f"{_(args.lang, 'rows_rejected')}: {len(rejects)}")
    for reject in rejects[:10]:
        print(f"  {reject['row_id']}: {_(args.lang, reject['reason'])}")
    print(f"{_(args.lang, 'cleaned_written')} {out_dir / 'cleaned.csv'}")
    print(f"{_(args.lang, 'rejects_written')} {out_dir / 'rejects.csv'}")


def _finish(args, cfg: ExperimentConfig, out_dir: Path, report: ExperimentReport) -> None:
    report.save(out_dir)
    emit_report(report, out_dir, cfg.output.formats)
    if "pediatric_empty" in report.notices:
        print(_(args.lang, "pediatric_empty"))
    print(f"{_(args.lang, 'report_written')} {out_dir}")


def cmd_train(args, cfg: ExperimentConfig, out_dir: Path) -> None:
    print(_(args.lang, "training_tabular"))
    report = run_pipeline(cfg, out_dir)
    atomic_write_text(out_dir / RESOLVED_CONFIG, to_yaml(cfg))
    sizes = report.cohort_sizes
    adults = sizes["train"] + sizes["validation"] + sizes["test"]
    print(f"{_(args.lang, 'cohort_sizes')}: {adults} / {sizes['pediatric']}")
    print(f"{_(args.lang, 'artifacts_written')} {out_dir / ARTIFACTS_DIR}")
    _finish(args, cfg, out_dir, report)


def _stored_report(args, out_dir: Path) -> ExperimentReport:
    try:
        return ExperimentReport.load(out_dir)
    except DataError:
        print(_(args.lang, "missing_artifacts"))
        raise


def cmd_sweep(args, cfg: ExperimentConfig, out_dir: Path) -> None:
    report = run_dropout_sweep(cfg, out_dir, _stored_report(args, out_dir))
    print(_(args.lang, "sweep_done"))
    _finish(args, cfg, out_dir, report)


def cmd_strata(args, cfg: ExperimentConfig, out_dir: Path) -> None:
    report = run_age_strata(cfg, out_dir, _stored_report(args, out_dir))
    print(_(args.lang, "strata_done"))
    _finish(args, cfg, out_dir, report)


def cmd_report(args, cfg: ExperimentConfig, out_dir: Path) -> None:
    report = _stored_report(args, out_dir)
    emit_report(report, out_dir, cfg.output.formats)
    print(f"{_(args.lang, 'report_written')} {out_dir}")


COMMANDS = {
    "synth": cmd_synth,
    "preprocess": cmd_preprocess,
    "train": cmd_train,
    "sweep": cmd_sweep,
    "strata": cmd_strata,
    "report": cmd_report,
}


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)
    try:
        cfg = resolve_config(args)
        out_dir = resolve_output_dir(args.out, cfg.output.dir)
        COMMANDS[args.command](args, cfg, out_dir)
    except TriageError as e:
        key = next((k for cls, k in ERROR_KEYS if isinstance(e, cls)), "data_error")
        logger.error("%s: %s", _(args.lang, key), e)
        return e.exit_code
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
