"""End-to-end run: ingest, split, base models, late fusion, evaluation.

Bases are fit on the adult train split; the meta-classifier is fit on their
validation outputs (or on out-of-fold train outputs); adult test and the whole
pediatric cohort are scored. Pediatric records never reach any fit.
"""

import logging
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from app.constants import N_LEVELS
from app.errors import DataError, TriageError
from app.experiment.artifacts import BaseArtifacts, SplitProbs
from app.experiment.config import ExperimentConfig, to_dict
from app.experiment.report import ADULT, PEDIATRIC, ExperimentReport
from app.fusion.meta import MetaClassifier, train_meta
from app.fusion.dropout import DropoutPolicy
from app.gbdt.booster import GBDTModel, train_multiclass, train_ordinal
from app.gbdt.model_io import save_model
from app.ingest import (
    TriageRecord,
    feature_matrix,
    labels_of,
    parse_and_clean,
    read_raw_csv,
    split_cohorts,
    stratified_folds,
    stratified_split,
)
from app.metrics import confusion_matrix, evaluate, mean_multiclass_log_loss, mean_squared_error
from app.schema import MetricRowTD
from app.synthgen import generate_cohort
from app.text.attention import configure_threads, train_attention
from app.text.external import load_external_probs, write_prediction_csv
from app.text.linear_model import fit_text_classifier, select_text_linear
from app.text.tokenize import tokenize
from app.utils import ensure_dir

logger = logging.getLogger(__name__)

ARTIFACTS_DIR = "artifacts"
MULTIMODAL = "Multimodal"


@contextmanager
def stage(name: str):
    try:
        yield
    except TriageError as e:
        raise e.with_stage(name) from e


@dataclass
class Cohorts:
    train: list[TriageRecord]
    validation: list[TriageRecord]
    test: list[TriageRecord]
    pediatric: list[TriageRecord]


def load_records(cfg: ExperimentConfig) -> tuple[list[TriageRecord], int]:
    """Records and the number of rejected rows."""
    if cfg.data.source == "csv":
        try:
            frame = read_raw_csv(cfg.data.csv)
        except FileNotFoundError as e:
            raise DataError(f"input file not found: {cfg.data.csv}") from e
        records, rejects = parse_and_clean(frame, cfg.preprocess_config())
        return records, len(rejects)
    return generate_cohort(cfg.cohort_spec(), workers=cfg.synth.workers), 0


def make_cohorts(records: Sequence[TriageRecord], cfg: ExperimentConfig) -> Cohorts:
    adult, pediatric = split_cohorts(records, cfg.preprocess.adult_age)
    if not adult:
        raise DataError("adult cohort is empty, nothing to train on")
    train, validation, test = stratified_split(adult, cfg.split_ratios(), cfg.seed)
    return Cohorts(train, validation, test, pediatric)


def metric_row(
    model: str,
    cohort: str,
    y_true,
    y_pred,
    probs: Optional[np.ndarray] = None,
    scores: Optional[np.ndarray] = None,
    training_error: Optional[float] = None,
) -> MetricRowTD:
    bundle = evaluate(y_true, y_pred, prob_rows=probs, scores=scores)
    uses_log_loss = probs is not None
    return MetricRowTD(
        model=model,
        cohort=cohort,
        training_error=training_error,
        test_error=bundle.mean_log_loss if uses_log_loss else bundle.mse,
        qwk=bundle.qwk,
        accuracy=bundle.accuracy,
        balanced_accuracy=bundle.balanced_accuracy,
        macro_f1=bundle.macro_f1,
        log_loss=bundle.mean_log_loss,
        mse=bundle.mse,
        error_metric="log-loss" if uses_log_loss else "mse",
    )


def prob_rows(
    model: str,
    probs_by_cohort: dict[str, np.ndarray],
    labels_by_cohort: dict[str, np.ndarray],
    training_error: Optional[float],
) -> list[MetricRowTD]:
    rows = []
    for cohort, probs in probs_by_cohort.items():
        y = labels_by_cohort[cohort]
        if len(y) == 0:
            continue
        rows.append(
            metric_row(
                model,
                cohort,
                y,
                np.argmax(probs, axis=1) + 1,
                probs=probs,
                training_error=training_error if cohort == ADULT else None,
            )
        )
    return rows


def _empty_probs() -> np.ndarray:
    return np.zeros((0, N_LEVELS))


class TextModels:
    """Fitted text models plus the probability source chosen for fusion."""

    def __init__(self, cfg: ExperimentConfig, cohorts: Cohorts):
        self.cfg = cfg
        self.cohorts = cohorts
        train_texts = [r.chief_complaint for r in cohorts.train]
        val_texts = [r.chief_complaint for r in cohorts.validation]
        self.tfidf, self.trials = select_text_linear(
            train_texts,
            labels_of(cohorts.train),
            val_texts,
            labels_of(cohorts.validation),
            cfg.text_grid(),
            min_df=cfg.text.min_df,
            max_iter=cfg.text.max_iter,
        )
        self.attention = None
        if cfg.text.attention:
            configure_threads(cfg.text.threads)
            self.attention = train_attention(
                [tokenize(t) for t in train_texts],
                labels_of(cohorts.train),
                cfg.attention_config(),
            )

    def tfidf_probs(self, records):
        if not records:
            return _empty_probs()
        return self.tfidf.predict_proba([r.chief_complaint for r in records])

    def attention_probs(self, records):
        if not records:
            return _empty_probs()
        return self.attention.predict_proba([r.chief_complaint for r in records])

    def external_probs(self, records):
        if not records:
            return _empty_probs()
        return load_external_probs(self.cfg.text.external_probs, [r.record_id for r in records])

    def fusion_probs(self, records):
        source = self.cfg.fusion_text_source()
        return getattr(self, f"{source}_probs")(records)


def _oof_meta_probs(
    cfg: ExperimentConfig, cohorts: Cohorts, text: TextModels
) -> tuple[np.ndarray, np.ndarray]:
    """Out-of-fold tabular and text probabilities for every train record."""
    train = cohorts.train
    folds = stratified_folds(train, cfg.fusion.oof_folds, cfg.seed)
    X_val, y_val = feature_matrix(cohorts.validation), labels_of(cohorts.validation)
    tab = np.zeros((len(train), N_LEVELS))
    txt = np.zeros((len(train), N_LEVELS))
    source = cfg.fusion_text_source()

    for k in range(cfg.fusion.oof_folds):
        held = np.flatnonzero(folds == k)
        fit_rows = [train[i] for i in np.flatnonzero(folds != k)]
        held_rows = [train[i] for i in held]
        fold_gbdt = train_multiclass(
            feature_matrix(fit_rows), labels_of(fit_rows), X_val, y_val, cfg.gbdt_config()
        )
        tab[held] = fold_gbdt.predict_proba(feature_matrix(held_rows))

        texts = [r.chief_complaint for r in fit_rows]
        if source == "attention":
            fold_text = train_attention(
                [tokenize(t) for t in texts], labels_of(fit_rows), cfg.attention_config()
            )
        else:
            fold_text = fit_text_classifier(
                texts,
                labels_of(fit_rows),
                text.tfidf.ngram_range,
                text.tfidf.C,
                min_df=cfg.text.min_df,
                max_iter=cfg.text.max_iter,
            )
        txt[held] = fold_text.predict_proba([r.chief_complaint for r in held_rows])
        logger.debug("out-of-fold probabilities for fold %d (%d records)", k + 1, len(held))
    return tab, txt


def _split(records, tab, text) -> SplitProbs:
    return SplitProbs(
        ids=[r.record_id for r in records],
        labels=labels_of(records),
        ages=np.asarray([r.age_at_visit for r in records], dtype=np.int64),
        tab=tab,
        text=text,
    )


def meta_rows(model: str, meta: MetaClassifier, arts: BaseArtifacts) -> list[MetricRowTD]:
    meta_split = arts["meta"]
    training_error = mean_multiclass_log_loss(meta.predict_proba(meta_split.stacked()), meta_split.labels)
    probs = {ADULT: meta.predict_proba(arts["test"].stacked())}
    labels = {ADULT: arts["test"].labels}
    if len(arts["pediatric"]):
        probs[PEDIATRIC] = meta.predict_proba(arts["pediatric"].stacked())
        labels[PEDIATRIC] = arts["pediatric"].labels
    return prob_rows(model, probs, labels, training_error)


def fit_meta(arts: BaseArtifacts, cfg: ExperimentConfig, policy: DropoutPolicy) -> MetaClassifier:
    meta_split = arts["meta"]
    return train_meta(meta_split.stacked(), meta_split.labels, cfg.meta_config(), policy)


def run_pipeline(cfg: ExperimentConfig, out_dir: Path) -> ExperimentReport:
    out_dir = Path(out_dir)
    report = ExperimentReport(config=to_dict(cfg))
    report.seeds = {
        "master": cfg.seed,
        "synth": cfg.seed,
        "split": cfg.seed,
        "gbdt": cfg.seed,
        "attention": cfg.seed,
        "oof_folds": cfg.seed,
    }

    with stage("ingest"):
        records, n_rejects = load_records(cfg)
        cohorts = make_cohorts(records, cfg)
    report.cohort_sizes = {
        "train": len(cohorts.train),
        "validation": len(cohorts.validation),
        "test": len(cohorts.test),
        "pediatric": len(cohorts.pediatric),
        "rejected": n_rejects,
    }
    logger.info(
        "cohorts: %d train / %d validation / %d test adults, %d pediatric",
        len(cohorts.train),
        len(cohorts.validation),
        len(cohorts.test),
        len(cohorts.pediatric),
    )
    if not cohorts.pediatric:
        logger.warning("pediatric cohort is empty, pediatric rows omitted")
        report.notices.append("pediatric_empty")

    eval_sets = {ADULT: cohorts.test, PEDIATRIC: cohorts.pediatric}
    labels = {c: labels_of(rs) for c, rs in eval_sets.items()}
    X = {c: feature_matrix(rs) for c, rs in eval_sets.items()}
    X_train, y_train = feature_matrix(cohorts.train), labels_of(cohorts.train)
    X_val, y_val = feature_matrix(cohorts.validation), labels_of(cohorts.validation)

    rows: list[MetricRowTD] = []

    with stage("gbdt"):
        gbdt_class = train_multiclass(X_train, y_train, X_val, y_val, cfg.gbdt_config())
        gbdt_reg = train_ordinal(X_train, y_train, X_val, y_val, cfg.gbdt_config())
        rows += _gbdt_rows(gbdt_class, gbdt_reg, X, labels, X_train, y_train)

    with stage("text"):
        text = TextModels(cfg, cohorts)
        report.text_selection = [
            {"ngram_range": list(t["ngram_range"]), "C": t["C"], "macro_f1": t["macro_f1"]}
            for t in text.trials
        ]
        rows += prob_rows(
            "TF-IDF",
            {c: text.tfidf_probs(rs) for c, rs in eval_sets.items()},
            labels,
            mean_multiclass_log_loss(text.tfidf_probs(cohorts.train), y_train),
        )
        if text.attention is not None:
            rows += prob_rows(
                "Attention",
                {c: text.attention_probs(rs) for c, rs in eval_sets.items()},
                labels,
                mean_multiclass_log_loss(text.attention_probs(cohorts.train), y_train),
            )
        if cfg.text.external_probs:
            rows += prob_rows(
                "External",
                {c: text.external_probs(rs) for c, rs in eval_sets.items()},
                labels,
                None,
            )

    with stage("fusion"):
        if cfg.fusion.meta_source == "oof":
            meta_records = cohorts.train
            meta_tab, meta_text = _oof_meta_probs(cfg, cohorts, text)
        else:
            meta_records = cohorts.validation
            meta_tab, meta_text = gbdt_class.predict_proba(X_val), text.fusion_probs(cohorts.validation)

        def tab_probs(c):
            return gbdt_class.predict_proba(X[c]) if len(X[c]) else _empty_probs()

        arts = BaseArtifacts(
            {
                "meta": _split(meta_records, meta_tab, meta_text),
                "test": _split(cohorts.test, tab_probs(ADULT), text.fusion_probs(cohorts.test)),
                "pediatric": _split(
                    cohorts.pediatric, tab_probs(PEDIATRIC), text.fusion_probs(cohorts.pediatric)
                ),
            }
        )
        meta = fit_meta(arts, cfg, DropoutPolicy.none(cfg.seed))
        rows += meta_rows(MULTIMODAL, meta, arts)

        predictions = {}
        for cohort in (ADULT, PEDIATRIC):
            name = "test" if cohort == ADULT else "pediatric"
            split = arts[name]
            if len(split):
                fused = meta.predict_proba(split.stacked())
                matrix = confusion_matrix(split.labels, np.argmax(fused, axis=1) + 1)
                report.confusion[f"{MULTIMODAL}|{cohort}"] = matrix.counts.tolist()
                predictions[name] = (split.ids, fused)

    report.rows = rows
    # nothing lands on disk until every stage has succeeded
    artifacts_dir = ensure_dir(out_dir / ARTIFACTS_DIR)
    arts.save(artifacts_dir)
    save_model(gbdt_class, artifacts_dir / "gbdt_multiclass.json")
    save_model(gbdt_reg, artifacts_dir / "gbdt_ordinal.json")
    for name, (ids, fused) in predictions.items():
        write_prediction_csv(out_dir / f"predictions_{name}.csv", ids, fused)
    return report


def _gbdt_rows(
    gbdt_class: GBDTModel, gbdt_reg: GBDTModel, X, labels, X_train, y_train
) -> list[MetricRowTD]:
    rows = prob_rows(
        "GBDT Class",
        {c: gbdt_class.predict_proba(x) for c, x in X.items() if len(x)},
        labels,
        mean_multiclass_log_loss(gbdt_class.predict_proba(X_train), y_train),
    )
    train_scores = gbdt_reg.predict_score(X_train)
    training_mse = mean_squared_error(train_scores, y_train)
    for cohort, x in X.items():
        if not len(x):
            continue
        scores = gbdt_reg.predict_score(x)
        rows.append(
            metric_row(
                "GBDT Regress",
                cohort,
                labels[cohort],
                gbdt_reg.predict_level(x),
                scores=scores,
                training_error=training_mse if cohort == ADULT else None,
            )
        )
    return rows


def load_artifacts(out_dir: Path) -> BaseArtifacts:
    return BaseArtifacts.load(Path(out_dir) / ARTIFACTS_DIR)
