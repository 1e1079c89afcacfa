import math
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

import main
from app.constants import (
    AGE_BRACKETS,
    EXIT_CONFIG,
    EXIT_DATA,
    EXIT_OK,
    EXIT_TRAINING,
    OUTPUT_DIR_ENV,
    PREDICTION_HEADER,
    VITAL_BOUNDS,
)
from app.errors import ConfigError, ReportError
from app.experiment.artifacts import BaseArtifacts, SplitProbs
from app.experiment.config import load_config
from app.experiment.pipeline import ARTIFACTS_DIR, MULTIMODAL, fit_meta, load_artifacts, run_pipeline
from app.experiment.report import (
    ADULT,
    ADULT_KEYS,
    PEDIATRIC,
    PEDIATRIC_KEYS,
    ExperimentReport,
    emit_report,
    render_csv_table,
    render_report,
    render_tex,
    table_cells,
)
from app.experiment.strata import OVERALL, run_age_strata
from app.experiment.sweep import dropout_label, dropout_policy, run_dropout_sweep
from app.fusion.meta import predict_meta
from app.fusion.stacking import AblationMode, ablate
from app.ingest import write_records_csv
from app.synthgen import generate_cohort
from app.utils import resolve_output_dir

SMALL = [
    "synth.n_records=1500",
    "gbdt.n_estimators=20",
    "gbdt.learning_rate=0.3",
    "gbdt.early_stopping_rounds=5",
    "text.epochs=3",
    "text.d_model=8",
    "text.d_k=4",
    "fusion.passes=2",
    "sweep.symmetric=[0.0,0.4]",
    "sweep.asym_lo=0.3",
    "sweep.asym_hi=0.4",
    "strata.dropout=0.4",
]
BASELINES = {"GBDT Class", "GBDT Regress", "TF-IDF", "Attention"}


def small_config(*extra):
    return load_config(None, SMALL + list(extra))


def full_run(cfg, out_dir: Path) -> ExperimentReport:
    report = run_pipeline(cfg, out_dir)
    report = run_dropout_sweep(cfg, out_dir, report)
    return run_age_strata(cfg, out_dir, report)


@pytest.fixture(scope="module")
def run(tmp_path_factory):
    out_dir = tmp_path_factory.mktemp("run")
    cfg = small_config()
    return cfg, out_dir, full_run(cfg, out_dir)


# === Config ===


def test_defaults_follow_protocol():
    cfg = load_config()
    assert cfg.split_ratios().as_tuple() == (0.6, 0.2, 0.2)
    gbdt = cfg.gbdt_config()
    assert (gbdt.n_estimators, gbdt.learning_rate, gbdt.early_stopping_rounds) == (500, 0.05, 25)
    assert cfg.text_grid() == [((1, 3), 0.1)]
    assert (cfg.meta_config().C, cfg.meta_config().max_iter) == (1.0, 1000)
    assert cfg.sweep.symmetric == [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6]
    assert len(cfg.asymmetric_rates()) ** 2 == 64


def test_config_file_with_comments(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text(
        "# experiment\nseed=7  # master seed\n\ntext.grid_ngrams=[1-1,1-2]\ntext.grid_C=[0.1,1.0]\n",
        encoding="utf-8",
    )
    cfg = load_config(path, ["gbdt.max_depth=3"])
    assert cfg.seed == 7
    assert len(cfg.text_grid()) == 4
    assert cfg.gbdt_config().max_depth == 3
    assert cfg.gbdt_config().seed == 7


def test_overrides_beat_file(tmp_path):
    path = tmp_path / "exp.yaml"
    path.write_text("seed: 4\nfusion:\n  C: 0.5\n", encoding="utf-8")
    cfg = load_config(path, ["seed=9"])
    assert cfg.seed == 9
    assert cfg.meta_config().C == 0.5


@pytest.mark.parametrize(
    "overrides",
    [
        ["nosuch.key=1"],
        ["fusion.meta_source=bogus"],
        ["data.source=csv"],
        ["gbdt.learning_rate=2.0"],
        ["text.d_k=0"],
        ["sweep.symmetric=[0.2,1.5]"],
        ["output.formats=[pdf]"],
        ["text.external_probs=x.csv", "fusion.meta_source=oof"],
        ["text.grid_ngrams=[one-three]"],
    ],
)
def test_invalid_config(overrides):
    with pytest.raises(ConfigError):
        load_config(None, overrides)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "absent.cfg")


def test_fusion_text_source_auto():
    assert load_config().fusion_text_source() == "attention"
    assert load_config(None, ["text.attention=false"]).fusion_text_source() == "tfidf"
    assert load_config(None, ["text.external_probs=p.csv"]).fusion_text_source() == "external"


def test_cohort_spec_uses_configured_bounds():
    spec = load_config(None, ["preprocess.bounds.heartrate=[30,200]"]).cohort_spec()
    assert spec.bounds["heartrate"] == (30.0, 200.0)
    assert spec.bounds["temperature"] == VITAL_BOUNDS["temperature"]


def test_output_dir_precedence(monkeypatch):
    monkeypatch.setenv(OUTPUT_DIR_ENV, "from_env")
    assert resolve_output_dir("cli", "cfg") == Path("cli")
    assert resolve_output_dir(None, "cfg") == Path("cfg")
    assert resolve_output_dir(None, None) == Path("from_env")
    monkeypatch.delenv(OUTPUT_DIR_ENV)
    assert resolve_output_dir(None, None) == Path("runs")


# === Pipeline ===


def test_row_structure(run):
    _, _, report = run
    for cohort in (ADULT, PEDIATRIC):
        models = [r["model"] for r in report.cohort_rows(cohort)]
        assert BASELINES | {MULTIMODAL} <= set(models)
        assert len(models) == len(set(models))
    for r in report.cohort_rows(ADULT):
        assert r["training_error"] is not None
    assert all(r["training_error"] is None for r in report.cohort_rows(PEDIATRIC))
    assert report.row("GBDT Regress", ADULT)["error_metric"] == "mse"
    assert report.row(MULTIMODAL, ADULT)["error_metric"] == "log-loss"


def test_seeds_and_sizes_recorded(run):
    cfg, _, report = run
    assert report.seeds["master"] == cfg.seed
    assert set(report.seeds["dropout_cells"]) >= {"0.4,0.4", "0.3,0.4", "0,0"}
    sizes = report.cohort_sizes
    assert sizes["train"] + sizes["validation"] + sizes["test"] + sizes["pediatric"] == 1500
    assert len(report.text_selection) == 1


def test_artifacts_written(run):
    _, out_dir, report = run
    arts = load_artifacts(out_dir)
    assert len(arts["meta"]) == report.cohort_sizes["validation"]
    assert len(arts["pediatric"]) == report.cohort_sizes["pediatric"]
    assert (out_dir / ARTIFACTS_DIR / "gbdt_multiclass.json").exists()

    predictions = pd.read_csv(out_dir / "predictions_test.csv", dtype={"record_id": str})
    assert tuple(predictions.columns) == PREDICTION_HEADER
    assert len(predictions) == report.cohort_sizes["test"]
    probs = predictions[list(PREDICTION_HEADER[2:])].to_numpy()
    assert np.array_equal(predictions["pred_level"].to_numpy(), np.argmax(probs, axis=1) + 1)


def test_confusion_matches_multimodal_accuracy(run):
    _, _, report = run
    counts = np.array(report.confusion[f"{MULTIMODAL}|{ADULT}"])
    assert np.trace(counts) / counts.sum() == report.row(MULTIMODAL, ADULT)["accuracy"]


def test_rerun_is_identical(run, tmp_path):
    cfg, out_dir, report = run
    again = full_run(cfg, tmp_path)
    assert again.to_json() == report.to_json()
    for name in ("labels.csv", "tab_test.csv", "text_pediatric.csv", "gbdt_ordinal.json"):
        first = (out_dir / ARTIFACTS_DIR / name).read_bytes()
        assert (tmp_path / ARTIFACTS_DIR / name).read_bytes() == first


def test_pediatric_records_never_reach_training(tmp_path):
    records = generate_cohort(load_config(None, SMALL).cohort_spec())
    write_records_csv(records, tmp_path / "all.csv")
    write_records_csv([r for r in records if not r.is_pediatric], tmp_path / "adults.csv")

    def adult_rows(name):
        cfg = small_config("data.source=csv", f"data.csv={tmp_path / name}", "synth.n_records=0")
        report = run_pipeline(cfg, tmp_path / name.replace(".csv", ""))
        return report.cohort_rows(ADULT)

    assert adult_rows("all.csv") == adult_rows("adults.csv")


def test_empty_pediatric_cohort(tmp_path):
    cfg = small_config("synth.adult_fraction=1.0")
    report = full_run(cfg, tmp_path)
    assert "pediatric_empty" in report.notices
    assert report.cohort_rows(PEDIATRIC) == []
    files = render_report(report, ["csv"])
    assert "table_adult.csv" in files
    assert "table_pediatric.csv" not in files
    assert all(row["n"] == 0 and row["both_intact"] is None for row in report.strata)


def test_upstream_errors_carry_stage(tmp_path):
    cfg = small_config("data.source=csv", f"data.csv={tmp_path / 'absent.csv'}")
    with pytest.raises(Exception, match=r"^\[ingest\] input file not found"):
        run_pipeline(cfg, tmp_path / "out")
    assert not (tmp_path / "out").exists()


# === Sweep ===


def test_zero_rate_equals_multimodal(run):
    _, _, report = run
    for cohort in (ADULT, PEDIATRIC):
        base = report.row(MULTIMODAL, cohort)
        cells = [c for c in report.symmetric if c["p_tab"] == 0.0 and c["cohort"] == cohort]
        assert {c["metric"]: c["value"] for c in cells} == {"accuracy": base["accuracy"], "qwk": base["qwk"]}


def test_symmetric_row_equals_grid_cell(run):
    _, _, report = run
    for cohort in (ADULT, PEDIATRIC):
        row = report.row(dropout_label(0.4), cohort)
        cells = [c for c in report.heatmap if (c["p_tab"], c["p_text"], c["cohort"]) == (0.4, 0.4, cohort)]
        assert {c["metric"]: c["value"] for c in cells} == {"accuracy": row["accuracy"], "qwk": row["qwk"]}


def test_grid_shape_and_ranges(run):
    _, _, report = run
    assert len(report.heatmap) == 4 * 2 * 2
    assert all(math.isfinite(c["value"]) for c in report.heatmap)
    assert all(-1.0 <= c["value"] <= 1.0 for c in report.heatmap if c["metric"] == "qwk")
    assert "0% Dropout" not in {r["model"] for r in report.rows}


def test_parallel_sweep_matches_serial(run, tmp_path):
    cfg, out_dir, report = run
    parallel = small_config("sweep.workers=3")
    swept = run_dropout_sweep(parallel, out_dir, ExperimentReport(rows=list(report.rows)))
    assert swept.heatmap == report.heatmap
    assert swept.symmetric == report.symmetric


def test_sweep_needs_artifacts(tmp_path):
    with pytest.raises(Exception, match="missing base artifacts"):
        run_dropout_sweep(small_config(), tmp_path, ExperimentReport())


# === Strata ===


def test_strata_brackets(run):
    _, _, report = run
    assert [r["bracket"] for r in report.strata] == [b[0] for b in AGE_BRACKETS] + [OVERALL]
    assert sum(r["n"] for r in report.strata[:-1]) == report.strata[-1]["n"] == report.cohort_sizes["pediatric"]


def test_overall_intact_equals_dropout_row(run):
    _, _, report = run
    overall = report.strata[-1]
    assert overall["both_intact"] == report.row(dropout_label(0.4), PEDIATRIC)["accuracy"]


def test_masked_cells_match_manual_masking(run):
    cfg, out_dir, report = run
    arts = load_artifacts(out_dir)
    meta = fit_meta(arts, cfg, dropout_policy(cfg.seed, 0.4, 0.4))
    peds = arts["pediatric"]
    stacked = peds.stacked()
    for mode, key in ((AblationMode.NO_TEXT, "no_text"), (AblationMode.NO_TABULAR, "no_tabular")):
        preds = np.argmax(predict_meta(meta, ablate(stacked, mode)), axis=1) + 1
        assert report.strata[-1][key] == float(np.mean(preds == peds.labels))


# === Report files ===


def test_tex_rows_for_fused_and_dropout_models():
    adult = {
        "model": "Multimodal",
        "training_error": 0.721,
        "test_error": 0.724,
        "qwk": 0.633,
        "accuracy": 0.696,
        "balanced_accuracy": 0.471,
        "macro_f1": 0.496,
    }
    tex = render_tex(("Model",) + ADULT_KEYS, table_cells([adult], "model", ADULT_KEYS))
    assert "Multimodal & 0.721 & 0.724 & 0.633 & 0.696 & 0.471 & 0.496 \\\\" in tex.splitlines()

    peds = {"model": "40% Dropout", "qwk": 0.351, "accuracy": 0.571, "balanced_accuracy": 0.314, "macro_f1": 0.322}
    tex = render_tex(("Model",) + PEDIATRIC_KEYS, table_cells([peds], "model", PEDIATRIC_KEYS))
    assert "40\\% Dropout & 0.351 & 0.571 & 0.314 & 0.322 \\\\" in tex.splitlines()


def test_csv_cells_with_separators_are_quoted():
    text = render_csv_table(("model", "note"), [["Dropout (30%, 40%)", 'a "b"']])
    assert text.splitlines() == ["model,note", '"Dropout (30%, 40%)","a ""b"""']


def test_artifact_ids_with_separators_round_trip(tmp_path, rng):
    def part(ids):
        n = len(ids)
        return SplitProbs(
            ids=ids,
            labels=rng.integers(1, 6, size=n),
            ages=rng.integers(0, 90, size=n),
            tab=rng.dirichlet(np.ones(5), size=n),
            text=rng.dirichlet(np.ones(5), size=n),
        )

    saved = BaseArtifacts({"meta": part(["ED,1", "ED,2"]), "test": part(['x"y', "plain"]), "pediatric": part(["P,1"])})
    saved.save(tmp_path)
    loaded = BaseArtifacts.load(tmp_path)
    for split, original in saved.splits.items():
        assert loaded[split].ids == original.ids
        assert np.array_equal(loaded[split].labels, original.labels)
        assert np.array_equal(loaded[split].ages, original.ages)
        assert np.array_equal(loaded[split].tab, original.tab)
        assert np.array_equal(loaded[split].text, original.text)


def test_emitted_tables(run, tmp_path):
    _, _, report = run
    written = emit_report(report, tmp_path, ["csv", "txt", "tex"])
    names = {p.name for p in written}
    assert {"table_adult.csv", "table_pediatric.tex", "strata.txt", "heatmap.csv", "symmetric.csv"} <= names
    header = (tmp_path / "table_adult.csv").read_text(encoding="utf-8").splitlines()[0]
    assert header == "Model,Training Error,Test Error,QWK,Accuracy,Balanced Acc,Macro F1"
    peds = (tmp_path / "table_pediatric.csv").read_text(encoding="utf-8").splitlines()[0]
    assert peds == "Model,QWK,Accuracy,Balanced Acc,Macro F1"
    heatmap = pd.read_csv(tmp_path / "heatmap.csv")
    assert list(heatmap.columns) == ["p_tab", "p_text", "cohort", "metric", "value"]


def test_report_json_round_trip(run, tmp_path):
    _, _, report = run
    report.save(tmp_path)
    assert ExperimentReport.load(tmp_path).to_json() == report.to_json()


def test_empty_report_writes_nothing(tmp_path):
    out_dir = tmp_path / "out"
    with pytest.raises(ReportError):
        emit_report(ExperimentReport(), out_dir)
    assert not out_dir.exists()


# === Command line ===


def cli_args(command, out_dir, *extra):
    args = [command, "--out", str(out_dir), "--log-level", "WARNING"]
    for override in SMALL:
        args += ["--set", override]
    return args + list(extra)


def test_cli_subcommands(tmp_path):
    assert main.run(cli_args("train", tmp_path)) == EXIT_OK
    assert (tmp_path / "config.resolved.yaml").exists()
    assert main.run(cli_args("sweep", tmp_path)) == EXIT_OK
    assert main.run(cli_args("strata", tmp_path)) == EXIT_OK
    assert main.run(cli_args("report", tmp_path, "--format", "tex")) == EXIT_OK
    assert (tmp_path / "table_adult.tex").exists()
    assert (tmp_path / "heatmap.csv").exists()


def test_cli_synth_and_preprocess(tmp_path):
    assert main.run(cli_args("synth", tmp_path)) == EXIT_OK
    assert main.run(cli_args("preprocess", tmp_path, "--input", str(tmp_path / "cohort.csv"))) == EXIT_OK
    rejects = pd.read_csv(tmp_path / "rejects.csv")
    assert list(rejects.columns) == ["row_id", "reason"]
    assert len(pd.read_csv(tmp_path / "cleaned.csv")) == 1500


def test_cli_exit_codes(tmp_path):
    assert main.run(cli_args("train", tmp_path, "--set", "fusion.meta_source=bogus")) == EXIT_CONFIG
    assert main.run(cli_args("sweep", tmp_path / "empty")) == EXIT_DATA

    records = [r for r in generate_cohort(small_config().cohort_spec()) if r.acuity != 5]
    write_records_csv(records, tmp_path / "no5.csv")
    code = main.run(
        cli_args("train", tmp_path / "fail", "--set", "data.source=csv", "--set", f"data.csv={tmp_path / 'no5.csv'}")
    )
    assert code == EXIT_TRAINING
    assert not (tmp_path / "fail" / "report.json").exists()


# === Benchmark ===


@pytest.mark.slow
def test_directional_findings(tmp_path):
    fused_wins = dropout_helps = late_drop = 0
    for seed in range(10):
        cfg = load_config(None, [f"seed={seed}", "sweep.symmetric=[0.0,0.3,0.4,0.5,0.6]", "sweep.asym_hi=0.1"])
        out_dir = tmp_path / str(seed)
        report = run_dropout_sweep(cfg, out_dir, run_pipeline(cfg, out_dir))

        adult = {r["model"]: r["qwk"] for r in report.cohort_rows(ADULT)}
        baselines = ("GBDT Class", "GBDT Regress", "Attention", "TF-IDF")
        fused_wins += adult[MULTIMODAL] > max(adult[name] for name in baselines)

        peds = {r["model"]: r["qwk"] for r in report.cohort_rows(PEDIATRIC)}
        peak = max(peds[dropout_label(0.3)], peds[dropout_label(0.4)])
        dropout_helps += peak > peds[MULTIMODAL]
        late_drop += max(peds[dropout_label(0.5)], peds[dropout_label(0.6)]) < peak

    assert fused_wins >= 8
    assert dropout_helps >= 8
    assert late_drop >= 7
