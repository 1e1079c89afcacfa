from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from app.errors import ConfigError
from app.fusion.stacking import BLOCKS, StackedFeatures


class DropoutMode(str, Enum):
    NONE = "none"
    SYMMETRIC = "symmetric"
    ASYMMETRIC = "asymmetric"


@dataclass(frozen=True)
class DropoutPolicy:
    mode: DropoutMode = DropoutMode.NONE
    p_tab: float = 0.0
    p_text: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("p_tab", "p_text"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"dropout probability {name}={p} outside [0, 1]")
        if self.mode is DropoutMode.SYMMETRIC and self.p_tab != self.p_text:
            raise ConfigError("symmetric dropout needs one shared probability")
        if self.mode is DropoutMode.NONE and (self.p_tab or self.p_text):
            raise ConfigError("dropout mode none cannot carry probabilities")

    @classmethod
    def none(cls, seed: int = 0) -> "DropoutPolicy":
        return cls(DropoutMode.NONE, 0.0, 0.0, seed)

    @classmethod
    def symmetric(cls, p: float, seed: int = 0) -> "DropoutPolicy":
        return cls(DropoutMode.SYMMETRIC, p, p, seed)

    @classmethod
    def asymmetric(cls, p_tab: float, p_text: float, seed: int = 0) -> "DropoutPolicy":
        return cls(DropoutMode.ASYMMETRIC, p_tab, p_text, seed)

    @property
    def rates(self) -> np.ndarray:
        return np.array([self.p_tab, self.p_text])

    @property
    def is_noop(self) -> bool:
        return self.p_tab == 0.0 and self.p_text == 0.0


def apply_modality_dropout(
    batch: StackedFeatures,
    policy: DropoutPolicy,
    rng: Optional[np.random.Generator] = None,
) -> StackedFeatures:
    """Zero each block independently with its modality's probability.

    Rows losing both blocks are kept as all-zero inputs. Without an explicit
    generator the policy seed drives the draw.
    """
    if policy.is_noop:
        return batch
    rng = np.random.default_rng(policy.seed) if rng is None else rng
    dropped = rng.random((len(batch), 2)) < policy.rates

    values, present = batch.values.copy(), batch.present.copy()
    for m, block in enumerate(BLOCKS):
        values[dropped[:, m], block] = 0.0
    present &= ~dropped
    return StackedFeatures(values, present)
