"""Stacked per-modality probability vectors: [p_tab (5), p_text (5)]."""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from app.constants import N_LEVELS
from app.errors import DataError

TAB = slice(0, N_LEVELS)
TEXT = slice(N_LEVELS, 2 * N_LEVELS)
BLOCKS = (TAB, TEXT)
NORMALIZATION_TOL = 1e-6


class AblationMode(str, Enum):
    BOTH_INTACT = "both_intact"
    NO_TABULAR = "no_tabular"
    NO_TEXT = "no_text"


@dataclass(frozen=True)
class StackedFeatures:
    """A batch of stacked rows; `present[:, m]` is False where block m is zeroed."""

    values: np.ndarray
    present: np.ndarray

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[1] != 2 * N_LEVELS:
            raise DataError(f"stacked features must be n x {2 * N_LEVELS}, got {self.values.shape}")
        if self.present.shape != (self.values.shape[0], 2):
            raise DataError("presence flags do not match the batch")

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def tab_present(self) -> np.ndarray:
        return self.present[:, 0]

    @property
    def text_present(self) -> np.ndarray:
        return self.present[:, 1]

    def take(self, rows) -> "StackedFeatures":
        return StackedFeatures(self.values[rows], self.present[rows])

    def with_block_zeroed(self, block: int, rows=None) -> "StackedFeatures":
        values, present = self.values.copy(), self.present.copy()
        rows = slice(None) if rows is None else rows
        values[rows, BLOCKS[block]] = 0.0
        present[rows, block] = False
        return StackedFeatures(values, present)


def _as_rows(p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    return p[None, :] if p.ndim == 1 else p


def stack_probabilities(p_tab, p_text) -> StackedFeatures:
    """Concatenate tabular then text probabilities; accepts single rows or batches."""
    p_tab, p_text = _as_rows(p_tab), _as_rows(p_text)
    for name, p in (("tabular", p_tab), ("text", p_text)):
        if p.ndim != 2 or p.shape[1] != N_LEVELS:
            raise DataError(f"{name} probabilities must have {N_LEVELS} columns, got {p.shape}")
        if not np.all(np.isfinite(p)):
            raise DataError(f"{name} probabilities contain non-finite values")
        bad = np.flatnonzero(np.abs(p.sum(axis=1) - 1.0) > NORMALIZATION_TOL)
        if bad.size:
            raise DataError(f"{name} probability row {bad[0]} not normalized")
    if p_tab.shape[0] != p_text.shape[0]:
        raise DataError(f"{p_tab.shape[0]} tabular rows but {p_text.shape[0]} text rows")

    values = np.concatenate([p_tab, p_text], axis=1)
    return StackedFeatures(values, np.ones((values.shape[0], 2), dtype=bool))


def ablate(a: StackedFeatures, mode) -> StackedFeatures:
    mode = AblationMode(mode)
    if mode is AblationMode.NO_TABULAR:
        return a.with_block_zeroed(0)
    if mode is AblationMode.NO_TEXT:
        return a.with_block_zeroed(1)
    return a
