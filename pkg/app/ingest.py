"""Encounter CSV parsing, cleaning, cohort separation and stratified splitting."""

import logging
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd

from app.constants import (
    ADULT_AGE,
    AGE_BOUNDS,
    GENDER_TOKENS,
    INPUT_COLUMNS,
    LEVELS,
    PAIN_UNABLE_TOKENS,
    TABULAR_FEATURES,
    VITAL_BOUNDS,
    VITALS,
)
from app.errors import ConfigError, DataError, SchemaError
from app.schema import RejectTD

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TriageRecord:
    record_id: str
    gender: Optional[int]
    age_at_visit: int
    temperature: Optional[float]
    heartrate: Optional[float]
    resp_rate: Optional[float]
    pain_score: Optional[int]
    o2_sat: Optional[float]
    systolic_bp: Optional[float]
    diastolic_bp: Optional[float]
    unable: int
    chief_complaint: str
    acuity: int

    @property
    def is_pediatric(self) -> bool:
        return self.age_at_visit < ADULT_AGE

    def features(self) -> list[float]:
        """Tabular feature row in TABULAR_FEATURES order, NaN for missing."""
        row = []
        for name in TABULAR_FEATURES:
            value = getattr(self, name)
            row.append(math.nan if value is None else float(value))
        return row


@dataclass(frozen=True)
class PreprocessConfig:
    bounds: Mapping[str, tuple[float, float]] = field(
        default_factory=lambda: dict(VITAL_BOUNDS)
    )
    unable_tokens: tuple[str, ...] = PAIN_UNABLE_TOKENS
    adult_age: int = ADULT_AGE
    age_bounds: tuple[int, int] = AGE_BOUNDS

    def __post_init__(self):
        for name, (lo, hi) in self.bounds.items():
            if not lo < hi:
                raise ConfigError(f"bounds for {name}: min {lo} must be below max {hi}")
        if self.adult_age < 1:
            raise ConfigError(f"adult age threshold must be >= 1, got {self.adult_age}")


@dataclass(frozen=True)
class SplitRatios:
    train: float = 0.6
    validation: float = 0.2
    test: float = 0.2

    def __post_init__(self):
        for f in fields(self):
            if not getattr(self, f.name) > 0:
                raise ConfigError(f"split fraction {f.name} must be > 0")
        total = self.train + self.validation + self.test
        if abs(total - 1.0) > 1e-9:
            raise ConfigError(f"split fractions must sum to 1, got {total}")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.train, self.validation, self.test)


# === Reading ===


def read_raw_csv(path: Union[str, Path]) -> pd.DataFrame:
    """Load a CSV as strings; empty fields stay empty strings."""
    return pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")


def check_schema(columns: Iterable[str]) -> None:
    present = set(columns)
    for column in INPUT_COLUMNS:
        if column not in present:
            raise SchemaError(f"input is missing required column '{column}'")


def _parse_float(raw: str) -> Optional[float]:
    text = str(raw).strip()
    if not text:
        return None
    try:
        value = float(text)
    except ValueError:
        return None
    if math.isnan(value) or math.isinf(value):
        return None
    return value


def _in_bounds(value: Optional[float], bounds: tuple[float, float]) -> Optional[float]:
    if value is None:
        return None
    lo, hi = bounds
    return value if lo <= value <= hi else None


def _parse_gender(raw: str) -> Optional[int]:
    return GENDER_TOKENS.get(str(raw).strip().lower())


def _parse_pain(raw: str, cfg: PreprocessConfig) -> tuple[Optional[int], int]:
    text = str(raw).strip().lower()
    if text in cfg.unable_tokens:
        return None, 1
    value = _in_bounds(_parse_float(text), cfg.bounds["pain_score"])
    if value is None:
        return None, 0
    return int(math.floor(value + 0.5)), 0


def _parse_acuity(raw: str) -> Optional[int]:
    value = _parse_float(raw)
    if value is None or value != int(value) or int(value) not in LEVELS:
        return None
    return int(value)


def _parse_age(raw: str, cfg: PreprocessConfig) -> Optional[int]:
    value = _parse_float(raw)
    if value is None:
        return None
    lo, hi = cfg.age_bounds
    if not lo <= value <= hi:
        return None
    return int(math.floor(value))


def _parse_row(row: Mapping[str, str], cfg: PreprocessConfig):
    text = str(row["chief_complaint"]).strip()
    if not any(ch.isalnum() for ch in text):
        return None, "missing text"

    acuity = _parse_acuity(row["acuity"])
    if acuity is None:
        return None, "invalid acuity"

    age = _parse_age(row["age_at_visit"], cfg)
    if age is None:
        return None, "invalid age"

    vitals = {
        name: _in_bounds(_parse_float(row[name]), cfg.bounds[name]) for name in VITALS
    }
    pain_score, unable = _parse_pain(row["pain_score"], cfg)

    record = TriageRecord(
        record_id=str(row["record_id"]).strip(),
        gender=_parse_gender(row["gender"]),
        age_at_visit=age,
        pain_score=pain_score,
        unable=unable,
        chief_complaint=" ".join(text.split()),
        acuity=acuity,
        **vitals,
    )
    return record, None


def parse_and_clean(
    raw_rows: Union[pd.DataFrame, Sequence[Mapping[str, str]]],
    cfg: Optional[PreprocessConfig] = None,
) -> tuple[list[TriageRecord], list[RejectTD]]:
    """Turn raw string rows into records; bad rows become (row_id, reason) rejects.

    Out-of-range vitals are nulled, not clipped, and the record is kept.
    """
    cfg = cfg or PreprocessConfig()
    if isinstance(raw_rows, pd.DataFrame):
        check_schema(raw_rows.columns)
        rows = raw_rows.to_dict(orient="records")
    else:
        rows = list(raw_rows)
        if rows:
            check_schema(rows[0].keys())

    records: list[TriageRecord] = []
    rejects: list[RejectTD] = []
    seen_ids: set[str] = set()

    for index, row in enumerate(rows):
        row_id = str(row.get("record_id", "")).strip()
        if not row_id:
            rejects.append(RejectTD(row_id=f"row{index + 1}", reason="missing record id"))
            continue
        if row_id in seen_ids:
            rejects.append(RejectTD(row_id=row_id, reason="duplicate record id"))
            continue

        record, reason = _parse_row(row, cfg)
        if record is None:
            rejects.append(RejectTD(row_id=row_id, reason=reason))
            continue

        seen_ids.add(row_id)
        records.append(record)

    if rejects:
        logger.warning("%d of %d rows rejected", len(rejects), len(rows))
    logger.info("%d records accepted", len(records))
    return records, rejects


# === Writing ===


def _format_number(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float) and value.is_integer():
        return str(int(value))
    return repr(value) if isinstance(value, float) else str(value)


def records_to_frame(records: Sequence[TriageRecord]) -> pd.DataFrame:
    """Serialize records back to the raw input schema (all strings)."""
    rows = []
    for r in records:
        row = {
            "record_id": r.record_id,
            "gender": _format_number(r.gender),
            "age_at_visit": str(r.age_at_visit),
            "pain_score": PAIN_UNABLE_TOKENS[0] if r.unable else _format_number(r.pain_score),
            "chief_complaint": r.chief_complaint,
            "acuity": str(r.acuity),
        }
        for name in VITALS:
            row[name] = _format_number(getattr(r, name))
        rows.append(row)
    return pd.DataFrame(rows, columns=list(INPUT_COLUMNS), dtype=str)


def write_records_csv(records: Sequence[TriageRecord], path: Union[str, Path]) -> None:
    records_to_frame(records).to_csv(path, index=False, encoding="utf-8")


def write_rejects_csv(rejects: Sequence[RejectTD], path: Union[str, Path]) -> None:
    pd.DataFrame(list(rejects), columns=["row_id", "reason"]).to_csv(
        path, index=False, encoding="utf-8"
    )


def feature_matrix(records: Sequence[TriageRecord]) -> np.ndarray:
    if not records:
        return np.empty((0, len(TABULAR_FEATURES)), dtype=np.float64)
    return np.asarray([r.features() for r in records], dtype=np.float64)


def labels_of(records: Sequence[TriageRecord]) -> np.ndarray:
    return np.asarray([r.acuity for r in records], dtype=np.int64)


# === Cohorts and splits ===


def split_cohorts(
    records: Sequence[TriageRecord], adult_age: int = ADULT_AGE
) -> tuple[list[TriageRecord], list[TriageRecord]]:
    adult = [r for r in records if r.age_at_visit >= adult_age]
    pediatric = [r for r in records if r.age_at_visit < adult_age]
    return adult, pediatric


def _largest_remainder(n: int, ratios: Sequence[float]) -> list[int]:
    raw = [n * r for r in ratios]
    counts = [int(math.floor(x)) for x in raw]
    remainder = n - sum(counts)
    # ties go to the earlier split
    order = sorted(range(len(ratios)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[:remainder]:
        counts[i] += 1
    return counts


def _class_indices(records: Sequence[TriageRecord]) -> dict[int, list[int]]:
    by_class: dict[int, list[int]] = {}
    for index, r in enumerate(records):
        by_class.setdefault(r.acuity, []).append(index)
    return dict(sorted(by_class.items()))


def stratified_split(
    records: Sequence[TriageRecord], ratios: SplitRatios, seed: int
) -> tuple[list[TriageRecord], list[TriageRecord], list[TriageRecord]]:
    """Per-class seeded shuffle, then contiguous slices sized by largest remainder."""
    if not records:
        raise DataError("cannot split an empty record list")
    shares = ratios.as_tuple()
    rng = np.random.default_rng(seed)
    assignment = np.full(len(records), -1, dtype=np.int64)

    for level, indices in _class_indices(records).items():
        if len(indices) < len(shares):
            raise DataError(
                f"acuity class {level} has {len(indices)} records, "
                f"fewer than the {len(shares)} splits"
            )
        shuffled = np.asarray(indices)[rng.permutation(len(indices))]
        start = 0
        for split_index, count in enumerate(_largest_remainder(len(indices), shares)):
            assignment[shuffled[start : start + count]] = split_index
            start += count

    parts = tuple(
        [records[i] for i in np.flatnonzero(assignment == s)] for s in range(len(shares))
    )
    logger.debug("split sizes %s", [len(p) for p in parts])
    return parts


def stratified_folds(records: Sequence[TriageRecord], k: int, seed: int) -> np.ndarray:
    """Fold id per record, each class dealt round-robin after a seeded shuffle."""
    if k < 2:
        raise ConfigError(f"need at least 2 folds, got {k}")
    rng = np.random.default_rng(seed)
    folds = np.empty(len(records), dtype=np.int64)
    for level, indices in _class_indices(records).items():
        if len(indices) < k:
            raise DataError(f"acuity class {level} has fewer than {k} records")
        shuffled = np.asarray(indices)[rng.permutation(len(indices))]
        folds[shuffled] = np.arange(len(indices)) % k
    return folds


def age_bracket(age: int, brackets) -> Optional[str]:
    for name, lo, hi in brackets:
        if lo <= age <= hi:
            return name
    return None
