"""Probability-exchange CSV: `record_id,p1,p2,p3,p4,p5`.

Used both for externally produced text-model outputs and for the cached
base-model outputs the fusion layer reads back. Fused predictions go out as
`record_id,pred_level,p1..p5`.
"""

from pathlib import Path
from typing import Sequence, Union

import numpy as np
import pandas as pd

from app.constants import N_LEVELS, PREDICTION_HEADER, PROB_COLUMNS, PROB_HEADER
from app.errors import DataError
from app.utils import atomic_write_text, csv_text

NORMALIZATION_TOL = 1e-6


def read_prob_csv(path: Union[str, Path]) -> tuple[list[str], np.ndarray]:
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DataError(f"cannot read probability file {path}: {e}") from e

    columns = list(frame.columns)
    if not columns or columns[0] != "record_id":
        raise DataError(f"{path}: first column must be record_id")
    if len(columns) - 1 != N_LEVELS:
        raise DataError(f"{path}: expected {N_LEVELS} probability columns, got {len(columns) - 1}")
    if columns != list(PROB_HEADER):
        raise DataError(f"{path}: header must be {','.join(PROB_HEADER)}")

    try:
        probs = frame[list(PROB_COLUMNS)].astype(np.float64).to_numpy()
    except ValueError as e:
        raise DataError(f"{path}: non-numeric probability ({e})") from e
    return frame["record_id"].tolist(), probs


def check_normalized(ids: Sequence[str], probs: np.ndarray, tol: float = NORMALIZATION_TOL) -> None:
    if not np.all(np.isfinite(probs)):
        raise DataError("probability rows contain non-finite values")
    bad = np.flatnonzero(np.abs(probs.sum(axis=1) - 1.0) > tol)
    if bad.size:
        raise DataError(f"row for id {ids[bad[0]]} not normalized (sum {probs[bad[0]].sum():.6f})")
    negative = np.flatnonzero((probs < 0).any(axis=1))
    if negative.size:
        raise DataError(f"row for id {ids[negative[0]]} has a negative probability")


def load_external_probs(path: Union[str, Path], expected_ids: Sequence[str]) -> np.ndarray:
    """Rows aligned to expected_ids; extra ids in the file are ignored."""
    ids, probs = read_prob_csv(path)
    position = {}
    for i, record_id in enumerate(ids):
        if record_id in position:
            raise DataError(f"{path}: duplicate id {record_id}")
        position[record_id] = i

    missing = [r for r in expected_ids if r not in position]
    if missing:
        raise DataError(f"{path}: missing id {missing[0]} ({len(missing)} missing)")

    aligned = probs[[position[r] for r in expected_ids]]
    check_normalized(list(expected_ids), aligned)
    return aligned


def _prob_frame(ids: Sequence[str], probs: np.ndarray) -> pd.DataFrame:
    probs = np.asarray(probs, dtype=np.float64)
    if probs.shape != (len(ids), N_LEVELS):
        raise DataError(f"expected {len(ids)} x {N_LEVELS} probabilities, got {probs.shape}")
    frame = pd.DataFrame(probs, columns=list(PROB_COLUMNS))
    frame.insert(0, "record_id", [str(i) for i in ids])
    return frame


def format_prob_rows(ids: Sequence[str], probs: np.ndarray) -> str:
    return csv_text(_prob_frame(ids, probs))


def write_prob_csv(path: Union[str, Path], ids: Sequence[str], probs: np.ndarray) -> None:
    atomic_write_text(Path(path), format_prob_rows(ids, probs))


def format_prediction_rows(ids: Sequence[str], probs: np.ndarray) -> str:
    """`record_id,pred_level,p1..p5`; pred_level is the argmax level."""
    frame = _prob_frame(ids, probs)
    levels = np.argmax(frame[list(PROB_COLUMNS)].to_numpy(), axis=1) + 1
    frame.insert(1, "pred_level", levels.astype(np.int64))
    return csv_text(frame[list(PREDICTION_HEADER)])


def write_prediction_csv(path: Union[str, Path], ids: Sequence[str], probs: np.ndarray) -> None:
    atomic_write_text(Path(path), format_prediction_rows(ids, probs))
